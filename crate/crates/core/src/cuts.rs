//! Benders cut families and subtour elimination rows.
//!
//! Every cut is stored as `coeff_x·x + coeff_y·y − aux ≤ rhs`, where `aux` is
//! a per-scenario recourse estimate `θ_ω`, the aggregate estimate `Θ`, or
//! absent.

use crate::two_stage::{dot, ApResult, FeasibilityResult, SpResult};
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};
use std::io::Write;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CutFamily {
    StandardMulti,
    StrengthenedMulti,
    Generalized,
    Feasibility,
    SubtourElim,
}

impl CutFamily {
    pub fn name(self) -> &'static str {
        match self {
            CutFamily::StandardMulti => "standard_multi",
            CutFamily::StrengthenedMulti => "strengthened_multi",
            CutFamily::Generalized => "generalized",
            CutFamily::Feasibility => "feasibility",
            CutFamily::SubtourElim => "subtour",
        }
    }

    pub fn is_optimality(self) -> bool {
        matches!(self, CutFamily::StandardMulti | CutFamily::StrengthenedMulti | CutFamily::Generalized)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aux {
    Scenario(usize),
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub family: CutFamily,
    pub scenario: Option<usize>,
    pub coeff_x: Vec<f64>,
    pub coeff_y: Vec<f64>,
    pub aux: Option<Aux>,
    pub rhs: f64,
}

/// A master point: first-stage values plus recourse estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct MasterPoint<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub theta: &'a [f64],
    pub big_theta: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CutError {
    #[error("feasibility cut requested at a recourse-feasible point")]
    InvalidCall,
}

pub const VIOLATION_TOL: f64 = 1e-6;

impl Cut {
    /// `lhs − rhs` at a point; positive means violated.
    pub fn violation(&self, p: &MasterPoint) -> f64 {
        let mut lhs = dot(&self.coeff_x, p.x) + dot(&self.coeff_y, p.y);
        match self.aux {
            Some(Aux::Scenario(w)) => lhs -= p.theta[w],
            Some(Aux::Total) => lhs -= p.big_theta,
            None => {}
        }
        lhs - self.rhs
    }

    /// Lower bound the cut imposes on its auxiliary variable at `(x, y)`.
    pub fn bound_at(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.coeff_x, x) + dot(&self.coeff_y, y) - self.rhs
    }

    fn key(&self) -> (CutFamily, Option<usize>, Vec<i64>) {
        let round = |v: f64| (v * 1e9).round() as i64;
        let mut k: Vec<i64> = self.coeff_x.iter().chain(&self.coeff_y).map(|&v| round(v)).collect();
        k.push(round(self.rhs));
        (self.family, self.scenario, k)
    }
}

pub fn is_violated(cut: &Cut, point: &MasterPoint, tol: f64) -> bool {
    cut.violation(point) > tol
}

fn multicut(family: CutFamily, sp: &SpResult, x: &[f64], y: &[f64], scenario: usize) -> Cut {
    // θ ≥ Q + ν(x − x̄) + η(y − ȳ)
    Cut {
        family,
        scenario: Some(scenario),
        coeff_x: sp.nu.clone(),
        coeff_y: sp.eta.clone(),
        aux: Some(Aux::Scenario(scenario)),
        rhs: dot(&sp.nu, x) + dot(&sp.eta, y) - sp.objective,
    }
}

/// Cut from a subproblem solved at the master's own `(x*, y*)`.
pub fn standard_multicut(sp: &SpResult, x: &[f64], y: &[f64], scenario: usize) -> Cut {
    multicut(CutFamily::StandardMulti, sp, x, y, scenario)
}

/// Cut from a subproblem solved at `(x̄, ȳ)` with `ȳ` from the aggregated subproblem.
pub fn strengthened_multicut(sp: &SpResult, x: &[f64], y_ap: &[f64], scenario: usize) -> Cut {
    multicut(CutFamily::StrengthenedMulti, sp, x, y_ap, scenario)
}

/// `Θ ≥ AP(x̄) + μ(x − x̄)`.
pub fn generalized_cut(ap: &ApResult, x: &[f64]) -> Cut {
    Cut {
        family: CutFamily::Generalized,
        scenario: None,
        coeff_x: ap.mu.clone(),
        coeff_y: vec![0.0; ap.y.len()],
        aux: Some(Aux::Total),
        rhs: dot(&ap.mu, x) - ap.objective,
    }
}

/// `ε + λ(x − x̆) + β(y − y̆) ≤ 0`.
pub fn feasibility_cut(feas: &FeasibilityResult) -> Result<Cut, CutError> {
    if feas.epsilon_total <= 1e-9 {
        return Err(CutError::InvalidCall);
    }
    Ok(Cut {
        family: CutFamily::Feasibility,
        scenario: None,
        coeff_x: feas.lambda.clone(),
        coeff_y: feas.beta.clone(),
        aux: None,
        rhs: dot(&feas.lambda, &feas.x) + dot(&feas.beta, &feas.y) - feas.epsilon_total,
    })
}

/// Arc layout shared by the routing model: `x_ij` for every ordered pair of
/// distinct nodes `0..=n`, in row-major order with the diagonal skipped.
pub fn arc_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i <= n && j <= n);
    i * n + if j > i { j - 1 } else { j }
}

pub fn num_arcs(n: usize) -> usize {
    n * (n + 1)
}

/// Successor-graph components of an integral route; one cut-set row
/// `Σ_{i∈S, j∉S} x_ij ≥ 1` for each component `S` that misses the depot.
pub fn subtour_cuts(n: usize, x: &[f64], n_y: usize) -> Vec<Cut> {
    let nodes = n + 1;
    let mut adj = vec![Vec::new(); nodes];
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j && x[arc_index(n, i, j)] > 0.5 {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut comp = vec![usize::MAX; nodes];
    let mut cuts = Vec::new();
    for start in 0..nodes {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut members = vec![start];
        comp[start] = start;
        let mut k = 0;
        while k < members.len() {
            let u = members[k];
            k += 1;
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = start;
                    members.push(v);
                }
            }
        }
        if start == 0 {
            continue;
        }
        let mut coeff_x = vec![0.0; num_arcs(n)];
        for &i in &members {
            for j in 0..nodes {
                if j != i && comp[j] != start {
                    coeff_x[arc_index(n, i, j)] = -1.0;
                }
            }
        }
        cuts.push(Cut {
            family: CutFamily::SubtourElim,
            scenario: None,
            coeff_x,
            coeff_y: vec![0.0; n_y],
            aux: None,
            rhs: -1.0,
        });
    }
    cuts
}

/// Cut-set rows violated by a fractional arc vector: for every customer `t`
/// whose max flow to the depot is below one, the source side `S` of a minimum
/// cut gives `Σ_{i∈S, j∉S} x_ij ≥ 1`.
pub fn fractional_subtour_cuts(n: usize, x: &[f64], n_y: usize) -> Vec<Cut> {
    let nodes = n + 1;
    let mut cuts: Vec<Cut> = Vec::new();
    for t in 1..nodes {
        let mut residual = vec![0.0; nodes * nodes];
        for i in 0..nodes {
            for j in 0..nodes {
                if i != j {
                    residual[i * nodes + j] = x[arc_index(n, i, j)].max(0.0);
                }
            }
        }
        let mut flow = 0.0;
        let reach = loop {
            let mut prev = vec![usize::MAX; nodes];
            prev[t] = t;
            let mut queue = VecDeque::from([t]);
            while let Some(u) = queue.pop_front() {
                for v in 0..nodes {
                    if prev[v] == usize::MAX && residual[u * nodes + v] > 1e-9 {
                        prev[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if prev[0] == usize::MAX || flow >= 1.0 {
                break prev;
            }
            let mut push = f64::INFINITY;
            let mut v = 0;
            while v != t {
                push = push.min(residual[prev[v] * nodes + v]);
                v = prev[v];
            }
            let mut v = 0;
            while v != t {
                residual[prev[v] * nodes + v] -= push;
                residual[v * nodes + prev[v]] += push;
                v = prev[v];
            }
            flow += push;
        };
        if flow >= 1.0 - VIOLATION_TOL || reach[0] != usize::MAX {
            continue;
        }
        let mut coeff_x = vec![0.0; num_arcs(n)];
        for i in (0..nodes).filter(|&i| reach[i] != usize::MAX) {
            for j in (0..nodes).filter(|&j| j != i && reach[j] == usize::MAX) {
                coeff_x[arc_index(n, i, j)] = -1.0;
            }
        }
        if !cuts.iter().any(|c| c.coeff_x == coeff_x) {
            cuts.push(Cut {
                family: CutFamily::SubtourElim,
                scenario: None,
                coeff_x,
                coeff_y: vec![0.0; n_y],
                aux: None,
                rhs: -1.0,
            });
        }
    }
    cuts
}

/// Append-only cut collection that drops exact duplicates.
#[derive(Clone, Debug, Default)]
pub struct CutPool {
    cuts: Vec<Cut>,
    seen: HashSet<(CutFamily, Option<usize>, Vec<i64>)>,
}

impl CutPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when an identical cut is already present.
    pub fn insert(&mut self, cut: Cut) -> bool {
        if self.seen.insert(cut.key()) {
            self.cuts.push(cut);
            true
        } else {
            false
        }
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutLogEntry {
    pub family: CutFamily,
    pub scenario: Option<usize>,
    pub node: usize,
    pub violation: f64,
}

pub fn write_cut_log<W: Write>(mut out: W, entries: &[CutLogEntry]) -> std::io::Result<()> {
    writeln!(out, "family,scenario,node,violation")?;
    for e in entries {
        let scenario = e.scenario.map(|s| s.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{:e}", e.family.name(), scenario, e.node, e.violation)?;
    }
    Ok(())
}
