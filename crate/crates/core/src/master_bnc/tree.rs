//! LP-based branch and cut over a [`TwoStageProblem`].
//!
//! The master holds `x`, `y`, one `θ_ω` per subproblem scenario, the
//! aggregate `Θ ≥ d·y + Σ p_ω θ_ω`, and full recourse blocks for retained and
//! artificial scenarios. Benders cuts are separated at integral points (and
//! optionally at fractional ones); problem-specific lazy rows such as subtour
//! cuts come from a caller-supplied separator at integral points.

use crate::cuts::{
    feasibility_cut, generalized_cut, standard_multicut, strengthened_multicut, Aux, Cut, CutFamily, CutLogEntry,
    CutPool, MasterPoint, VIOLATION_TOL,
};
use crate::lp::{Basis, LpError, LpProblem, LpStatus, Sense, SimplexSolver};
use crate::two_stage::{dot, ApResult, Solved, SpResult, TwoStageProblem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApScope {
    /// Aggregated subproblem over the scenarios left to the subproblems.
    SpOnly,
    /// `ȳ` from an aggregated subproblem over every scenario.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub two_step: bool,
    pub ap_scope: ApScope,
    /// Benders rounds at fractional root points.
    pub root_rounds: usize,
    /// Benders rounds at fractional points of other nodes.
    pub fractional_rounds: usize,
    /// Also call the separator at fractional points.
    pub fractional_separation: bool,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Relative optimality tolerance.
    pub gap_tol: f64,
    /// Keep generated cuts and integral candidates in the outcome.
    pub record: bool,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            two_step: true,
            ap_scope: ApScope::SpOnly,
            root_rounds: 30,
            fractional_rounds: 0,
            fractional_separation: true,
            node_limit: None,
            time_limit: None,
            gap_tol: 1e-6,
            record: false,
        }
    }
}

/// Scenarios whose recourse lives inside the master.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub retained: Vec<usize>,
    /// Convex weights over all scenarios (zero on retained ones).
    pub artificial: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    NodeLimit,
}

/// Cuts that entered the master, by family.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutCounts {
    pub generalized: usize,
    pub strengthened_multi: usize,
    pub standard_multi: usize,
    pub feasibility: usize,
    pub subtour: usize,
}

impl CutCounts {
    fn bump(&mut self, family: CutFamily) {
        match family {
            CutFamily::Generalized => self.generalized += 1,
            CutFamily::StrengthenedMulti => self.strengthened_multi += 1,
            CutFamily::StandardMulti => self.standard_multi += 1,
            CutFamily::Feasibility => self.feasibility += 1,
            CutFamily::SubtourElim => self.subtour += 1,
        }
    }

    pub fn optimality(&self) -> usize {
        self.generalized + self.strengthened_multi + self.standard_multi
    }
}

/// An integral, separator-clean master point handed to Benders separation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub node: usize,
    pub x: Vec<f64>,
    pub y_master: Vec<f64>,
    /// `y` given to the scenario subproblems.
    pub y_sub: Vec<f64>,
}

/// A generated cut with the point it was computed at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedCut {
    pub cut: Cut,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeOutcome {
    pub status: SolveStatus,
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub root_lower_bound: f64,
    pub root_upper_bound: f64,
    pub counts: CutCounts,
    pub nodes_explored: usize,
    pub nodes_open: usize,
    /// Master re-solves triggered by added cuts.
    pub cut_rounds: usize,
    /// Every generated Benders cut (only with `record`).
    pub cuts: Vec<RecordedCut>,
    pub log: Vec<CutLogEntry>,
    pub candidates: Vec<CandidateRecord>,
}

struct Master {
    lp: LpProblem,
    n_x: usize,
    n_y: usize,
    theta: Vec<Option<usize>>,
    big_theta: usize,
    base_bounds: Vec<(f64, f64)>,
}

impl Master {
    fn build(p: &TwoStageProblem, ret: &Retention) -> Self {
        let ns = p.num_scenarios();
        let mut kept = vec![false; ns];
        for &w in &ret.retained {
            kept[w] = true;
        }
        let mut lp = LpProblem::new(0);
        for j in 0..p.n_x {
            lp.add_var(p.c[j], p.x_bounds[j].0, p.x_bounds[j].1);
        }
        for j in 0..p.n_y {
            lp.add_var(0.0, p.y_bounds[j].0, p.y_bounds[j].1);
        }
        let theta: Vec<Option<usize>> =
            (0..ns).map(|w| (!kept[w]).then(|| lp.add_var(0.0, p.theta_lower[w], f64::INFINITY))).collect();
        let big_theta = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.rows.extend(p.first_stage_rows.iter().cloned());
        // Θ ≥ d·y + Σ_SP p θ
        let mut link = vec![(big_theta, 1.0)];
        link.extend((0..p.n_y).filter(|&j| p.d[j] != 0.0).map(|j| (p.n_x + j, -p.d[j])));
        link.extend(theta.iter().enumerate().filter_map(|(w, t)| t.map(|t| (t, -p.probs[w]))));
        lp.add_row(link, Sense::Ge, 0.0);

        for &w in &ret.retained {
            add_block(&mut lp, p, &p.scenario_rhs[w], p.probs[w]);
        }
        for alpha in &ret.artificial {
            let mut rhs = vec![0.0; p.recourse_rows.len()];
            for (w, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    for (r, h) in rhs.iter_mut().zip(&p.scenario_rhs[w]) {
                        *r += a * h;
                    }
                }
            }
            let z0 = add_block(&mut lp, p, &rhs, 0.0);
            // Σ α θ ≥ f·z of the artificial scenario
            let mut coeffs: Vec<(usize, f64)> = alpha
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(w, &a)| (theta[w].expect("artificial weights only cover subproblem scenarios"), a))
                .collect();
            coeffs.extend((0..p.n_z).filter(|&k| p.f[k] != 0.0).map(|k| (z0 + k, -p.f[k])));
            lp.add_row(coeffs, Sense::Ge, 0.0);
        }
        let base_bounds = lp.var_bounds.clone();
        Self { lp, n_x: p.n_x, n_y: p.n_y, theta, big_theta, base_bounds }
    }

    fn add_cut(&mut self, cut: &Cut) {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        coeffs.extend(cut.coeff_x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)));
        coeffs.extend(cut.coeff_y.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (self.n_x + j, v)));
        match cut.aux {
            Some(Aux::Scenario(w)) => coeffs.push((self.theta[w].expect("cut for a subproblem scenario"), -1.0)),
            Some(Aux::Total) => coeffs.push((self.big_theta, -1.0)),
            None => {}
        }
        self.lp.add_row(coeffs, Sense::Le, cut.rhs);
    }
}

/// Appends one scenario's recourse rows over a fresh `z` block; returns the
/// block's first column.
fn add_block(lp: &mut LpProblem, p: &TwoStageProblem, rhs: &[f64], weight: f64) -> usize {
    let z0 = lp.num_vars;
    for k in 0..p.n_z {
        lp.add_var(weight * p.f[k], p.z_bounds[k].0, p.z_bounds[k].1);
    }
    let first = p.n_x + p.n_y;
    for (row, &h) in p.recourse_rows.iter().zip(rhs) {
        let coeffs = row.coeffs.iter().map(|&(j, a)| (if j < first { j } else { z0 + j - first }, a)).collect();
        lp.add_row(coeffs, row.sense, h);
    }
    z0
}

struct Node {
    bound: f64,
    id: usize,
    /// Tightened `x` bounds relative to the root.
    fixings: Vec<(usize, f64, f64)>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: smallest bound first, then oldest node
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

enum Separation {
    Added,
    Fathom,
}

fn key(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v * 1e9).round() as i64).collect()
}

struct Tree<'a> {
    p: &'a TwoStageProblem,
    cfg: &'a TreeConfig,
    master: Master,
    sp_ids: Vec<usize>,
    retained: Vec<usize>,
    solver: SimplexSolver,
    pool: CutPool,
    counts: CutCounts,
    log: Vec<CutLogEntry>,
    cuts: Vec<RecordedCut>,
    candidates: Vec<CandidateRecord>,
    upper: f64,
    incumbent: Option<(Vec<f64>, Vec<f64>)>,
    sp_ap_cache: HashMap<Vec<i64>, Solved<ApResult>>,
    full_cache: HashMap<Vec<i64>, Option<(f64, Vec<f64>)>>,
    cut_rounds: usize,
}

impl<'a> Tree<'a> {
    fn tol(&self) -> f64 {
        if self.upper.is_finite() {
            self.cfg.gap_tol * self.upper.abs().max(1.0)
        } else {
            0.0
        }
    }

    fn offer(&mut self, value: f64, x: &[f64], y: &[f64]) {
        if value < self.upper {
            self.upper = value;
            self.incumbent = Some((x.to_vec(), y.to_vec()));
        }
    }

    /// Adds the cuts violated at `point`; `y_gen` is the `y` they were computed at.
    /// Returns how many entered.
    fn add_violated(&mut self, cuts: Vec<Cut>, point: &MasterPoint, y_gen: &[f64], node: usize) -> usize {
        let mut added = 0;
        for cut in cuts {
            let violation = cut.violation(point);
            if self.cfg.record && cut.family != CutFamily::SubtourElim {
                self.cuts.push(RecordedCut { cut: cut.clone(), x: point.x.to_vec(), y: y_gen.to_vec() });
            }
            if violation > VIOLATION_TOL && self.pool.insert(cut.clone()) {
                self.master.add_cut(&cut);
                self.counts.bump(cut.family);
                self.log.push(CutLogEntry { family: cut.family, scenario: cut.scenario, node, violation });
                added += 1;
            }
        }
        added
    }

    fn solve_sps(&self, ids: &[usize], x: &[f64], y: &[f64]) -> Result<Vec<Solved<SpResult>>, LpError> {
        ids.par_iter().map(|&w| self.p.solve_sp(&self.p.scenario_rhs[w], x, y)).collect()
    }

    fn sp_ap(&mut self, x: &[f64]) -> Result<Solved<ApResult>, LpError> {
        let k = key(x);
        if let Some(hit) = self.sp_ap_cache.get(&k) {
            return Ok(hit.clone());
        }
        let ap = self.p.solve_ap(&self.p.blocks_for(&self.sp_ids), x)?;
        self.sp_ap_cache.insert(k, ap.clone());
        Ok(ap)
    }

    /// `c·x + AP_Ω(x)` and its windows, or `None` if no `y` is recourse-feasible.
    fn full_value(&mut self, x: &[f64]) -> Result<Option<(f64, Vec<f64>)>, LpError> {
        if self.retained.is_empty() {
            return Ok(self.sp_ap(x)?.feasible().map(|ap| (dot(&self.p.c, x) + ap.objective, ap.y)));
        }
        let k = key(x);
        if let Some(hit) = self.full_cache.get(&k) {
            return Ok(hit.clone());
        }
        let value = self.p.solve_ap(&self.p.all_blocks(), x)?.feasible().map(|ap| (dot(&self.p.c, x) + ap.objective, ap.y));
        self.full_cache.insert(k, value.clone());
        Ok(value)
    }

    fn feasibility_round(&mut self, x: &[f64], y: &[f64], point: &MasterPoint, node: usize) -> Result<usize, LpError> {
        let feas = self.p.solve_feasibility(&self.p.all_blocks(), x, y)?;
        Ok(match feasibility_cut(&feas) {
            Ok(cut) => self.add_violated(vec![cut], point, point.y, node),
            Err(_) => 0,
        })
    }

    /// Generalized and strengthened cuts at `x` with `ȳ` from the aggregated subproblem.
    fn two_step_cuts(&mut self, x: &[f64], point: &MasterPoint, node: usize, integral: bool) -> Result<usize, LpError> {
        let ap = match self.sp_ap(x)? {
            Solved::Feasible(ap) => ap,
            Solved::Infeasible => return self.feasibility_round(x, point.y, point, node),
        };
        let y_sub = match self.cfg.ap_scope {
            ApScope::SpOnly => ap.y.clone(),
            ApScope::All => match self.full_value(x)? {
                Some((_, y)) => y,
                None => ap.y.clone(),
            },
        };
        let mut cuts = vec![generalized_cut(&ap, x)];
        let sp_ids = self.sp_ids.clone();
        for (w, sp) in sp_ids.iter().zip(self.solve_sps(&sp_ids, x, &y_sub)?) {
            if let Solved::Feasible(sp) = sp {
                cuts.push(strengthened_multicut(&sp, x, &y_sub, *w));
            }
        }
        let added = self.add_violated(cuts, point, &y_sub, node);
        if self.cfg.record && integral {
            self.candidates.push(CandidateRecord { node, x: x.to_vec(), y_master: point.y.to_vec(), y_sub });
        }
        Ok(added)
    }

    /// Standard cuts at the master's own `(x*, y*)`; `Err` marks an infeasible scenario.
    fn standard_cuts(&mut self, x: &[f64], point: &MasterPoint, node: usize) -> Result<Result<usize, ()>, LpError> {
        let sp_ids = self.sp_ids.clone();
        let mut cuts = Vec::with_capacity(sp_ids.len());
        for (w, sp) in sp_ids.iter().zip(self.solve_sps(&sp_ids, x, point.y)?) {
            match sp {
                Solved::Feasible(sp) => cuts.push(standard_multicut(&sp, x, point.y, *w)),
                Solved::Infeasible => return Ok(Err(())),
            }
        }
        Ok(Ok(self.add_violated(cuts, point, point.y, node)))
    }

    fn integral_candidate(&mut self, x: &[f64], point: &MasterPoint, value: f64, node: usize) -> Result<Separation, LpError> {
        if self.cfg.two_step {
            match self.full_value(x)? {
                Some((full, y_bar)) => {
                    self.offer(full, x, &y_bar);
                    if value >= full - self.tol() {
                        return Ok(Separation::Fathom);
                    }
                }
                None => {
                    return Ok(if self.feasibility_round(x, point.y, point, node)? > 0 {
                        Separation::Added
                    } else {
                        Separation::Fathom
                    })
                }
            }
            if self.two_step_cuts(x, point, node, true)? > 0 {
                return Ok(Separation::Added);
            }
            // the master's y can still be cut off where ȳ's cuts are satisfied
            return Ok(match self.standard_cuts(x, point, node)? {
                Ok(k) if k > 0 => Separation::Added,
                _ => Separation::Fathom,
            });
        }
        match self.standard_cuts(x, point, node)? {
            Err(()) => {
                return Ok(if self.feasibility_round(x, point.y, point, node)? > 0 {
                    Separation::Added
                } else {
                    Separation::Fathom
                })
            }
            Ok(k) if k > 0 => return Ok(Separation::Added),
            Ok(_) => {}
        }
        if self.cfg.record {
            self.candidates.push(CandidateRecord { node, x: x.to_vec(), y_master: point.y.to_vec(), y_sub: point.y.to_vec() });
        }
        if let Some(cost) = self.p.total_cost(x, point.y)? {
            self.offer(cost, x, point.y);
        }
        Ok(Separation::Fathom)
    }

    fn fractional_round(&mut self, x: &[f64], point: &MasterPoint, node: usize) -> Result<usize, LpError> {
        if self.cfg.two_step {
            return self.two_step_cuts(x, point, node, false);
        }
        match self.standard_cuts(x, point, node)? {
            Ok(k) => Ok(k),
            Err(()) => self.feasibility_round(x, point.y, point, node),
        }
    }
}

fn bounds_for(master: &Master, fixings: &[(usize, f64, f64)]) -> Vec<(f64, f64)> {
    let mut b = master.base_bounds.clone();
    for &(j, lo, up) in fixings {
        b[j] = (lo, up);
    }
    b
}

/// Most fractional integer column, lowest index on ties.
fn branching_column(x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in x.iter().enumerate() {
        let frac = (v - v.floor()).min(v.ceil() - v);
        if frac > INTEGRALITY_TOL && best.is_none_or(|(_, f)| frac > f) {
            best = Some((j, frac));
        }
    }
    best.map(|(j, _)| j)
}

/// Solves the master by branch and cut. `separator` receives rounded
/// integral `x` (and fractional `x` with `fractional_separation`) and returns
/// rows that cut it off; an empty result means `x` is feasible.
pub fn branch_and_cut(
    p: &TwoStageProblem,
    retention: &Retention,
    cfg: &TreeConfig,
    separator: &dyn Fn(&[f64]) -> Vec<Cut>,
) -> Result<TreeOutcome, LpError> {
    p.validate().map_err(LpError::InvalidProblem)?;
    let start = Instant::now();
    let ns = p.num_scenarios();
    let mut kept = vec![false; ns];
    for &w in &retention.retained {
        kept[w] = true;
    }
    let mut tree = Tree {
        p,
        cfg,
        master: Master::build(p, retention),
        sp_ids: (0..ns).filter(|&w| !kept[w]).collect(),
        retained: retention.retained.clone(),
        solver: SimplexSolver::default(),
        pool: CutPool::new(),
        counts: CutCounts::default(),
        log: Vec::new(),
        cuts: Vec::new(),
        candidates: Vec::new(),
        upper: f64::INFINITY,
        incumbent: None,
        sp_ap_cache: HashMap::new(),
        full_cache: HashMap::new(),
        cut_rounds: 0,
    };
    let (n_x, n_y) = (tree.master.n_x, tree.master.n_y);
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, id: 0, fixings: Vec::new(), basis: None });
    let mut next_id = 1;
    let mut explored = 0;
    let mut lower = f64::NEG_INFINITY;
    let mut root = (f64::NEG_INFINITY, f64::INFINITY);
    let mut status = SolveStatus::Optimal;

    while let Some(node) = heap.pop() {
        if node.bound >= tree.upper - tree.tol() {
            continue;
        }
        if cfg.node_limit.is_some_and(|l| explored >= l) {
            status = SolveStatus::NodeLimit;
            heap.push(node);
            break;
        }
        if cfg.time_limit.is_some_and(|l| start.elapsed() >= l) {
            status = SolveStatus::TimeLimit;
            heap.push(node);
            break;
        }
        lower = lower.max(node.bound.min(tree.upper));
        explored += 1;
        let allowed = if node.id == 0 { cfg.root_rounds } else { cfg.fractional_rounds };
        let mut rounds = 0;
        let mut basis = node.basis;
        let mut last_value = f64::INFINITY;
        tree.master.lp.var_bounds = bounds_for(&tree.master, &node.fixings);
        loop {
            let (out, b) = tree.solver.solve_warm(&tree.master.lp, basis.as_ref())?;
            basis = Some(b);
            match out.status {
                LpStatus::Infeasible => break,
                LpStatus::Unbounded => return Err(LpError::InvalidProblem("master relaxation is unbounded".into())),
                LpStatus::Optimal => {}
            }
            let value = out.objective_value;
            last_value = value;
            if value >= tree.upper - tree.tol() {
                break;
            }
            let x = &out.primal[..n_x];
            let y = &out.primal[n_x..n_x + n_y];
            let theta: Vec<f64> = tree.master.theta.iter().map(|t| t.map_or(0.0, |t| out.primal[t])).collect();
            let point = MasterPoint { x, y, theta: &theta, big_theta: out.primal[tree.master.big_theta] };
            let Some(j) = branching_column(x) else {
                let xr: Vec<f64> = x.iter().map(|v| v.round()).collect();
                let rounded = MasterPoint { x: &xr, ..point.clone() };
                let lazy = separator(&xr);
                if !lazy.is_empty() && tree.add_violated(lazy, &rounded, rounded.y, node.id) > 0 {
                    tree.cut_rounds += 1;
                    continue;
                }
                match tree.integral_candidate(&xr, &rounded, value, node.id)? {
                    Separation::Added => {
                        tree.cut_rounds += 1;
                        continue;
                    }
                    Separation::Fathom => break,
                }
            };
            if cfg.fractional_separation {
                let lazy = separator(x);
                if !lazy.is_empty() && tree.add_violated(lazy, &point, point.y, node.id) > 0 {
                    tree.cut_rounds += 1;
                    continue;
                }
            }
            if rounds < allowed {
                rounds += 1;
                if tree.fractional_round(x, &point, node.id)? > 0 {
                    tree.cut_rounds += 1;
                    continue;
                }
            }
            let v = x[j];
            let mut down = node.fixings.clone();
            down.push((j, tree.master.lp.var_bounds[j].0, v.floor()));
            let mut up = node.fixings.clone();
            up.push((j, v.ceil(), tree.master.lp.var_bounds[j].1));
            for fixings in [down, up] {
                heap.push(Node { bound: value, id: next_id, fixings, basis: basis.clone() });
                next_id += 1;
            }
            break;
        }
        if node.id == 0 {
            root = (last_value.min(tree.upper), tree.upper);
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let lower_bound = match status {
        SolveStatus::Optimal => tree.upper,
        _ => lower.max(open_bound.min(tree.upper)),
    };
    if status == SolveStatus::Optimal && tree.incumbent.is_none() {
        return Err(LpError::InvalidProblem("no feasible first-stage solution".into()));
    }
    let (x, y) = match tree.incumbent {
        Some((x, y)) => (Some(x), Some(y)),
        None => (None, None),
    };
    Ok(TreeOutcome {
        status,
        x,
        y,
        upper_bound: tree.upper,
        lower_bound,
        root_lower_bound: root.0,
        root_upper_bound: root.1,
        counts: tree.counts,
        nodes_explored: explored,
        nodes_open: heap.len(),
        cut_rounds: tree.cut_rounds,
        cuts: tree.cuts,
        log: tree.log,
        candidates: tree.candidates,
    })
}

/// Optimal value of the master relaxation before any Benders or lazy cut.
pub fn root_relaxation(p: &TwoStageProblem, retention: &Retention) -> Result<f64, LpError> {
    let master = Master::build(p, retention);
    let (out, _) = SimplexSolver::default().solve(&master.lp)?;
    match out.status {
        LpStatus::Optimal => Ok(out.objective_value),
        s => Err(LpError::InvalidProblem(format!("master relaxation ended with status {s:?}"))),
    }
}
