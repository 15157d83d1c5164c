//! Master problem solved by branch and cut, plus the six solver variants.

pub mod tree;

use crate::cuts::{fractional_subtour_cuts, subtour_cuts, Cut};
use crate::lp::LpError;
use crate::model::{evaluate, FirstStageSolution, Instance, ModelError, ScenarioSet};
use crate::scenario_selection::{build_plan, RetentionMode, RetentionPlan, SelectionConfig};
use crate::second_stage::{build_two_stage, x_to_route, y_to_windows};
use crate::two_stage::TwoStageProblem;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};
use thiserror::Error;
pub use tree::{branch_and_cut, root_relaxation, ApScope, CandidateRecord, CutCounts, RecordedCut, Retention, SolveStatus, TreeConfig, TreeOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Bd,
    Tbd,
    Bdp,
    Tbdp,
    Bds,
    Tbds,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Bd, Variant::Tbd, Variant::Bdp, Variant::Tbdp, Variant::Bds, Variant::Tbds];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bd => "bd",
            Variant::Tbd => "tbd",
            Variant::Bdp => "bdp",
            Variant::Tbdp => "tbdp",
            Variant::Bds => "bds",
            Variant::Tbds => "tbds",
        }
    }

    pub fn two_step(self) -> bool {
        matches!(self, Variant::Tbd | Variant::Tbdp | Variant::Tbds)
    }

    pub fn retention(self) -> RetentionMode {
        match self {
            Variant::Bd | Variant::Tbd => RetentionMode::None,
            Variant::Bdp | Variant::Tbdp => RetentionMode::Random,
            Variant::Bds | Variant::Tbds => RetentionMode::Clustered,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant `{s}` (expected one of bd, tbd, bdp, tbdp, bds, tbds)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub tree: TreeConfig,
    pub selection: SelectionConfig,
}

impl SolverConfig {
    pub fn new(variant: Variant) -> Self {
        let mut cfg = Self { variant, tree: TreeConfig::default(), selection: SelectionConfig::default() };
        cfg.set_variant(variant);
        cfg
    }

    pub fn set_variant(&mut self, variant: Variant) {
        self.variant = variant;
        self.tree.two_step = variant.two_step();
        self.selection.mode = variant.retention();
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Deterministic summary of a solve; wall time is kept outside so identical
/// inputs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub variant: Variant,
    pub status: SolveStatus,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub root_lower_bound: f64,
    /// Incumbent value when the root node closed.
    pub root_upper_bound: f64,
    /// `(UB − LB)/|UB|` at the root.
    pub root_gap: f64,
    /// `(UB − LB)/LB` at the root.
    pub root_gap_over_lb: f64,
    pub cuts: CutCounts,
    pub optimality_cuts: usize,
    pub nodes: usize,
    pub open_nodes: usize,
    pub cut_rounds: usize,
    pub plan: RetentionPlan,
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub first_stage: Option<FirstStageSolution>,
}

pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if !upper.is_finite() || !lower.is_finite() {
        return f64::INFINITY;
    }
    if upper == lower {
        return 0.0;
    }
    ((upper - lower) / upper.abs().max(1e-10)).max(0.0)
}

pub fn gap_over_lower(upper: f64, lower: f64) -> f64 {
    if !upper.is_finite() || !lower.is_finite() {
        return f64::INFINITY;
    }
    if upper == lower {
        return 0.0;
    }
    ((upper - lower) / lower.abs().max(1e-10)).max(0.0)
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub report: SolveReport,
    pub outcome: TreeOutcome,
    pub wall_time: Duration,
}

/// Solves a generic two-stage problem with the configured variant.
pub fn solve_problem(
    p: &TwoStageProblem,
    cfg: &SolverConfig,
    separator: &dyn Fn(&[f64]) -> Vec<Cut>,
) -> Result<Solution, LpError> {
    let start = Instant::now();
    let plan = build_plan(p, &cfg.selection, separator)?;
    let outcome = branch_and_cut(p, &plan.retention(), &cfg.tree, separator)?;
    let ub = outcome.upper_bound;
    let report = SolveReport {
        variant: cfg.variant,
        status: outcome.status,
        objective: ub,
        lower_bound: outcome.lower_bound,
        gap: relative_gap(ub, outcome.lower_bound),
        root_lower_bound: outcome.root_lower_bound,
        root_upper_bound: outcome.root_upper_bound,
        root_gap: relative_gap(outcome.root_upper_bound, outcome.root_lower_bound),
        root_gap_over_lb: gap_over_lower(outcome.root_upper_bound, outcome.root_lower_bound),
        cuts: outcome.counts.clone(),
        optimality_cuts: outcome.counts.optimality(),
        nodes: outcome.nodes_explored,
        open_nodes: outcome.nodes_open,
        cut_rounds: outcome.cut_rounds,
        plan,
        x: outcome.x.clone(),
        y: outcome.y.clone(),
        first_stage: None,
    };
    Ok(Solution { report, outcome, wall_time: start.elapsed() })
}

/// Subtour separation for a routing problem with `n` customers: connected
/// components at integral points, minimum cuts at fractional ones.
pub fn subtour_separator(n: usize, n_y: usize) -> impl Fn(&[f64]) -> Vec<Cut> {
    move |x: &[f64]| {
        if x.iter().all(|v| (v - v.round()).abs() <= 1e-6) {
            subtour_cuts(n, x, n_y)
        } else {
            fractional_subtour_cuts(n, x, n_y)
        }
    }
}

/// Solves a TWATSP-ST instance; the incumbent is re-evaluated scenario by scenario.
pub fn solve(instance: &Instance, scenarios: &ScenarioSet, cfg: &SolverConfig) -> Result<Solution, SolveError> {
    instance.validate()?;
    let p = build_two_stage(instance, scenarios);
    let separator = subtour_separator(instance.n, p.n_y);
    let mut solution = solve_problem(&p, cfg, &separator)?;
    if let (Some(x), Some(y)) = (&solution.report.x, &solution.report.y) {
        let route = x_to_route(instance.n, x).ok_or_else(|| ModelError::InvalidFirstStage("incumbent is not a tour".into()))?;
        let fs = FirstStageSolution { route, tw: y_to_windows(y) };
        evaluate(instance, scenarios, &fs)?;
        solution.report.first_stage = Some(fs);
    }
    Ok(solution)
}
