//! Bounded-variable revised simplex.
//!
//! Every row `a·x (≥|≤|=) b` gets a logical (slack) column so that the
//! working system is `A x + s = b` with sense-dependent bounds on `s`:
//! `≥` rows have `s ≤ 0`, `≤` rows have `s ≥ 0` and `=` rows have `s = 0`.
//! Phase one minimizes the sum of bound violations of the basic variables
//! from any starting basis (slack basis or a caller supplied warm basis),
//! phase two minimizes the true objective.
//!
//! The basis is factored through its structural part only: with `S` the
//! basic structural columns and `R` the rows whose logical is nonbasic
//! (`|R| = |S|`), only the square block `A[R, S]` is inverted. Cost per
//! iteration grows with the number of structural columns, not with the
//! number of rows, which suits cut-heavy master problems.
//!
//! Sign conventions for a minimization problem:
//! * `row_duals[i] = ∂ objective / ∂ rhs[i]`, so `≥` rows carry duals `≥ 0`,
//!   `≤` rows duals `≤ 0` and `=` rows free duals.
//! * `farkas` is expressed on rows normalized to `≥` form (`≤` rows negated),
//!   so every inequality multiplier is nonnegative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Ge,
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A linear program `min c·x` over sparse rows and box bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub var_bounds: Vec<(f64, f64)>,
    pub tracked_rows: Vec<usize>,
}

impl LpProblem {
    /// `num_vars` variables with zero cost and bounds `[0, ∞)`.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            var_bounds: vec![(0.0, f64::INFINITY); num_vars],
            tracked_rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.var_bounds.push((lower, upper));
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.rows.push(Row::new(coeffs, sense, rhs));
        self.rows.len() - 1
    }

    pub fn add_tracked_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        let r = self.add_row(coeffs, sense, rhs);
        self.tracked_rows.push(r);
        r
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let bad = |msg: String| Err(LpError::InvalidProblem(msg));
        if self.objective.len() != self.num_vars || self.var_bounds.len() != self.num_vars {
            return bad("objective/bounds length differs from num_vars".into());
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return bad(format!("objective coefficient {j} is not finite"));
        }
        for (j, &(lo, up)) in self.var_bounds.iter().enumerate() {
            if lo.is_nan() || up.is_nan() || lo > up || lo == f64::INFINITY || up == f64::NEG_INFINITY {
                return bad(format!("variable {j} has invalid bounds [{lo}, {up}]"));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return bad(format!("row {i} has non-finite rhs"));
            }
            for &(j, a) in &row.coeffs {
                if j >= self.num_vars || !a.is_finite() {
                    return bad(format!("row {i} has an invalid entry ({j}, {a})"));
                }
            }
        }
        if let Some(&r) = self.tracked_rows.iter().find(|&&r| r >= self.rows.len()) {
            return bad(format!("tracked row {r} does not exist"));
        }
        Ok(())
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x));
        let bounds = self
            .var_bounds
            .iter()
            .zip(x)
            .map(|(&(lo, up), &v)| (lo - v).max(v - up).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    /// Duals of `tracked_rows`, in the order they are listed.
    pub duals: Vec<f64>,
    /// Duals of every row.
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    /// Infeasibility certificate over rows normalized to `≥` form.
    pub farkas: Vec<f64>,
    /// Improving direction over the structural variables.
    pub ray: Vec<f64>,
    pub iterations: usize,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("invalid LP: {0}")]
    InvalidProblem(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_threshold: usize,
    pub max_iterations: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            pivot_tol: 1e-9,
            stall_threshold: 50,
            max_iterations: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// Status of every structural and logical column; reusable as a warm start.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis {
    pub num_vars: usize,
    pub status: Vec<VarStatus>,
}

impl Basis {
    /// Adapts a basis to a problem with extra trailing rows (their logicals
    /// become basic). Returns `None` when the shapes are incompatible.
    fn fit(&self, num_vars: usize, num_rows: usize) -> Option<Vec<VarStatus>> {
        if self.num_vars != num_vars || self.status.len() > num_vars + num_rows {
            return None;
        }
        let mut status = self.status.clone();
        status.resize(num_vars + num_rows, VarStatus::Basic);
        let basic = status.iter().filter(|s| **s == VarStatus::Basic).count();
        (basic == num_rows).then_some(status)
    }
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpOutcome, LpError> {
    SimplexSolver::default().solve(problem).map(|(o, _)| o)
}

/// Solves `problem` with each `(var, value)` pinned by an appended, tracked
/// equality row. The fixing duals follow the problem's own tracked duals.
pub fn solve_lp_with_fixings(problem: &LpProblem, fixings: &[(usize, f64)]) -> Result<LpOutcome, LpError> {
    let fixed = with_fixings(problem, fixings);
    solve_lp(&fixed)
}

pub fn with_fixings(problem: &LpProblem, fixings: &[(usize, f64)]) -> LpProblem {
    let mut fixed = problem.clone();
    for &(j, v) in fixings {
        fixed.add_tracked_row(vec![(j, 1.0)], Sense::Eq, v);
    }
    fixed
}

#[derive(Clone, Debug, Default)]
pub struct SimplexSolver {
    pub options: SimplexOptions,
}

impl SimplexSolver {
    pub fn new(options: SimplexOptions) -> Self {
        Self { options }
    }

    pub fn solve(&mut self, problem: &LpProblem) -> Result<(LpOutcome, Basis), LpError> {
        self.solve_warm(problem, None)
    }

    pub fn solve_warm(&mut self, problem: &LpProblem, warm: Option<&Basis>) -> Result<(LpOutcome, Basis), LpError> {
        problem.validate()?;
        let mut engine = Engine::new(problem, self.options);
        let start = warm.and_then(|b| b.fit(problem.num_vars, problem.rows.len()));
        let started_warm = start.is_some();
        match engine.run(start) {
            Ok(o) => Ok(o),
            // A stale warm basis can be badly conditioned; retry cold.
            Err(LpError::NumericalBreakdown(_)) if started_warm => {
                let mut cold = Engine::new(problem, self.options);
                cold.run(None)
            }
            Err(e) => Err(e),
        }
    }
}

const RATIO_RELAX: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;

struct Engine<'a> {
    p: &'a LpProblem,
    opt: SimplexOptions,
    n: usize,
    m: usize,
    // structural columns in CSC form
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    head: Vec<usize>,
    /// Basic structural columns, paired position-wise with `key_rows`.
    basic_cols: Vec<usize>,
    /// Rows whose logical is nonbasic.
    key_rows: Vec<usize>,
    /// Row-major inverse of `A[key_rows, basic_cols]`.
    kinv: Vec<f64>,
    iterations: usize,
}

enum Phase {
    One,
    Two,
}

enum StepResult {
    Continue,
    Optimal,
    Infeasible(Vec<f64>),
    Unbounded(Vec<f64>),
}

impl<'a> Engine<'a> {
    fn new(p: &'a LpProblem, opt: SimplexOptions) -> Self {
        let n = p.num_vars;
        let m = p.rows.len();
        let mut counts = vec![0usize; n + 1];
        for row in &p.rows {
            for &(j, _) in &row.coeffs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let mut fill = counts;
        let nnz = col_start[n];
        let mut col_row = vec![0; nnz];
        let mut col_val = vec![0.0; nnz];
        for (i, row) in p.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                col_row[fill[j]] = i;
                col_val[fill[j]] = a;
                fill[j] += 1;
            }
        }
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for &(lo, up) in &p.var_bounds {
            lower.push(lo);
            upper.push(up);
        }
        for row in &p.rows {
            let (lo, up) = match row.sense {
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(up);
        }
        let mut cost = p.objective.clone();
        cost.resize(n + m, 0.0);
        Self {
            p,
            opt,
            n,
            m,
            col_start,
            col_row,
            col_val,
            lower,
            upper,
            cost,
            rhs: p.rows.iter().map(|r| r.rhs).collect(),
            status: Vec::new(),
            x: vec![0.0; n + m],
            head: Vec::new(),
            basic_cols: Vec::new(),
            key_rows: Vec::new(),
            kinv: Vec::new(),
            iterations: 0,
        }
    }

    fn nonbasic_status(&self, j: usize) -> VarStatus {
        let (lo, up) = (self.lower[j], self.upper[j]);
        if lo.is_finite() {
            VarStatus::AtLower
        } else if up.is_finite() {
            VarStatus::AtUpper
        } else {
            VarStatus::Free
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Free | VarStatus::Basic => 0.0,
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|k| self.col_val[k] * y[self.col_row[k]])
                .sum()
        } else {
            y[j - self.n]
        }
    }

    /// Solves `B u = v`; entry `r` of the result belongs to `head[r]`.
    fn solve_basis(&self, v: &[f64]) -> Vec<f64> {
        let k = self.basic_cols.len();
        let us: Vec<f64> = (0..k)
            .map(|i| self.kinv[i * k..(i + 1) * k].iter().zip(&self.key_rows).map(|(a, &r)| a * v[r]).sum())
            .collect();
        let mut out = v.to_vec();
        for (&j, &u) in self.basic_cols.iter().zip(&us) {
            if u != 0.0 {
                for t in self.col_start[j]..self.col_start[j + 1] {
                    out[self.col_row[t]] -= self.col_val[t] * u;
                }
            }
        }
        for (&r, &u) in self.key_rows.iter().zip(&us) {
            out[r] = u;
        }
        out
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        if j < self.n {
            for t in self.col_start[j]..self.col_start[j + 1] {
                v[self.col_row[t]] = self.col_val[t];
            }
        } else {
            v[j - self.n] = 1.0;
        }
        self.solve_basis(&v)
    }

    /// `c_B^T B^{-1}` with `cb[r]` the cost of `head[r]`.
    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let k = self.basic_cols.len();
        let mut y = cb.to_vec();
        for &r in &self.key_rows {
            y[r] = 0.0;
        }
        let t: Vec<f64> = self
            .basic_cols
            .iter()
            .zip(&self.key_rows)
            .map(|(&j, &r)| cb[r] - self.column_dot(j, &y))
            .collect();
        for (l, &r) in self.key_rows.iter().enumerate() {
            y[r] = (0..k).map(|i| self.kinv[i * k + l] * t[i]).sum();
        }
        y
    }

    fn init_basis(&mut self, start: Option<Vec<VarStatus>>) -> Result<(), LpError> {
        let (n, m) = (self.n, self.m);
        let status = match start {
            Some(s) => s,
            None => {
                let mut s: Vec<VarStatus> = (0..n).map(|j| self.nonbasic_status(j)).collect();
                s.extend(std::iter::repeat_n(VarStatus::Basic, m));
                s
            }
        };
        self.status = status;
        // repair nonbasic statuses that no longer match the bounds
        for j in 0..n + m {
            let st = self.status[j];
            let ok = match st {
                VarStatus::Basic => true,
                VarStatus::AtLower => self.lower[j].is_finite(),
                VarStatus::AtUpper => self.upper[j].is_finite(),
                VarStatus::Free => !self.lower[j].is_finite() && !self.upper[j].is_finite(),
            };
            if !ok {
                self.status[j] = self.nonbasic_status(j);
            }
        }
        self.refactor()?;
        Ok(())
    }

    /// Rebuilds the factorization from the current statuses and recomputes
    /// basic values.
    fn refactor(&mut self) -> Result<(), LpError> {
        let (n, m) = (self.n, self.m);
        self.basic_cols = (0..n).filter(|&j| self.status[j] == VarStatus::Basic).collect();
        self.key_rows = (0..m).filter(|&r| self.status[n + r] != VarStatus::Basic).collect();
        let k = self.basic_cols.len();
        if self.key_rows.len() != k {
            return Err(LpError::NumericalBreakdown("basis has the wrong number of columns".into()));
        }
        let mut pos = vec![usize::MAX; m];
        for (l, &r) in self.key_rows.iter().enumerate() {
            pos[r] = l;
        }
        let mut block = vec![0.0; k * k];
        for (i, &j) in self.basic_cols.iter().enumerate() {
            for t in self.col_start[j]..self.col_start[j + 1] {
                let l = pos[self.col_row[t]];
                if l != usize::MAX {
                    block[l * k + i] = self.col_val[t];
                }
            }
        }
        self.kinv = invert(block, k, self.opt.pivot_tol)
            .ok_or_else(|| LpError::NumericalBreakdown("singular basis".into()))?;
        self.head = (n..n + m).collect();
        for (&r, &j) in self.key_rows.iter().zip(&self.basic_cols) {
            self.head[r] = j;
        }
        self.recompute_x();
        Ok(())
    }

    fn recompute_x(&mut self) {
        let (n, m) = (self.n, self.m);
        for j in 0..n + m {
            if self.status[j] != VarStatus::Basic {
                self.x[j] = self.nonbasic_value(j);
            }
        }
        let mut r = self.rhs.clone();
        for j in 0..n {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                let v = self.x[j];
                for k in self.col_start[j]..self.col_start[j + 1] {
                    r[self.col_row[k]] -= self.col_val[k] * v;
                }
            }
        }
        for i in 0..m {
            let j = n + i;
            if self.status[j] != VarStatus::Basic {
                r[i] -= self.x[j];
            }
        }
        let u = self.solve_basis(&r);
        for (i, v) in u.into_iter().enumerate() {
            self.x[self.head[i]] = v;
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        let tol = self.opt.feas_tol;
        if v < self.lower[j] - tol {
            -1.0
        } else if v > self.upper[j] + tol {
            1.0
        } else {
            0.0
        }
    }

    fn run(&mut self, start: Option<Vec<VarStatus>>) -> Result<(LpOutcome, Basis), LpError> {
        self.init_basis(start)?;
        let limit = self.opt.max_iterations.unwrap_or(50_000 + 50 * (self.n + self.m));
        let mut degenerate_run = 0usize;
        let mut verified = false;
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            let bland = degenerate_run >= self.opt.stall_threshold;
            match self.step(bland, &mut degenerate_run)? {
                StepResult::Continue => verified = false,
                StepResult::Optimal => {
                    // confirm on a fresh factorization before reporting
                    if verified {
                        return Ok(self.finish_optimal());
                    }
                    self.refactor()?;
                    verified = true;
                }
                StepResult::Infeasible(y) => {
                    if verified {
                        return Ok(self.finish_infeasible(y));
                    }
                    self.refactor()?;
                    verified = true;
                }
                StepResult::Unbounded(ray) => return Ok(self.finish_unbounded(ray)),
            }
        }
    }

    fn step(&mut self, bland: bool, degenerate_run: &mut usize) -> Result<StepResult, LpError> {
        let (n, m) = (self.n, self.m);
        let infeas: Vec<f64> = self.head.iter().map(|&j| self.infeasibility(j)).collect();
        let phase = if infeas.iter().any(|&c| c != 0.0) { Phase::One } else { Phase::Two };
        let cb: Vec<f64> = match phase {
            Phase::One => infeas,
            Phase::Two => self.head.iter().map(|&j| self.cost[j]).collect(),
        };
        let y = self.btran(&cb);

        // pricing
        let mut entering: Option<(usize, f64, f64)> = None; // (var, dir, score)
        for j in 0..n + m {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let c = match phase {
                Phase::One => 0.0,
                Phase::Two => self.cost[j],
            };
            let d = c - self.column_dot(j, &y);
            let dir = match st {
                VarStatus::AtLower if d < -DUAL_TOL => 1.0,
                VarStatus::AtUpper if d > DUAL_TOL => -1.0,
                VarStatus::Free if d.abs() > DUAL_TOL => -d.signum(),
                _ => continue,
            };
            if bland {
                entering = Some((j, dir, d.abs()));
                break;
            }
            if entering.is_none_or(|(_, _, s)| d.abs() > s) {
                entering = Some((j, dir, d.abs()));
            }
        }
        let Some((q, dir, _)) = entering else {
            return Ok(match phase {
                Phase::One => StepResult::Infeasible(y),
                Phase::Two => StepResult::Optimal,
            });
        };
        self.iterations += 1;

        let alpha = self.ftran(q);
        let one = matches!(phase, Phase::One);
        // rate of change of each basic variable per unit step
        let rate = |i: usize| -dir * alpha[i];

        // Harris pass one: largest step keeping relaxed bounds
        let mut tmax = f64::INFINITY;
        let limit_for = |i: usize, relax: f64| -> Option<f64> {
            let j = self.head[i];
            let d = rate(i);
            if d.abs() <= self.opt.pivot_tol {
                return None;
            }
            let v = self.x[j];
            let (lo, up) = (self.lower[j], self.upper[j]);
            let below = v < lo - self.opt.feas_tol;
            let above = v > up + self.opt.feas_tol;
            let bound = if one && below {
                (d > 0.0).then_some(lo)
            } else if one && above {
                (d < 0.0).then_some(up)
            } else if d > 0.0 {
                up.is_finite().then_some(up)
            } else {
                lo.is_finite().then_some(lo)
            }?;
            let slack = if d > 0.0 { bound + relax - v } else { bound - relax - v };
            Some((slack / d).max(0.0))
        };
        for i in 0..m {
            if let Some(t) = limit_for(i, RATIO_RELAX) {
                tmax = tmax.min(t);
            }
        }
        let own_range = self.upper[q] - self.lower[q];
        // pass two: among candidates within tmax, prefer the largest pivot
        let mut leave: Option<(usize, f64)> = None;
        let mut best_mag = 0.0;
        for i in 0..m {
            let Some(t_exact) = limit_for(i, 0.0) else { continue };
            if t_exact > tmax {
                continue;
            }
            let mag = alpha[i].abs();
            let better = if bland {
                leave.is_none_or(|(li, _)| self.head[i] < self.head[li])
            } else {
                mag > best_mag
            };
            if better {
                best_mag = mag;
                leave = Some((i, t_exact));
            }
        }

        if own_range.is_finite() && leave.is_none_or(|(_, t)| own_range <= t) {
            // bound flip
            let t = own_range;
            for i in 0..m {
                let j = self.head[i];
                self.x[j] += rate(i) * t;
            }
            self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
            self.x[q] = self.nonbasic_value(q);
            *degenerate_run = 0;
            return Ok(StepResult::Continue);
        }
        let Some((r, t)) = leave else {
            if one {
                return Err(LpError::NumericalBreakdown(
                    "phase one direction without a blocking variable".into(),
                ));
            }
            let mut ray = vec![0.0; n];
            if q < n {
                ray[q] = dir;
            }
            for i in 0..m {
                if self.head[i] < n {
                    ray[self.head[i]] = rate(i);
                }
            }
            return Ok(StepResult::Unbounded(ray));
        };
        if alpha[r].abs() < self.opt.pivot_tol {
            return Err(LpError::NumericalBreakdown(format!(
                "pivot magnitude {:.3e} below tolerance",
                alpha[r].abs()
            )));
        }

        if t <= 1e-12 {
            *degenerate_run += 1;
        } else {
            *degenerate_run = 0;
        }
        let out = self.head[r];
        let d = rate(r);
        let (lo, up) = (self.lower[out], self.upper[out]);
        let (was_below, was_above) = (self.x[out] < lo - self.opt.feas_tol, self.x[out] > up + self.opt.feas_tol);
        for i in 0..m {
            let j = self.head[i];
            self.x[j] += rate(i) * t;
        }
        self.x[q] += dir * t;
        // an infeasible leaving variable stops at the bound it just reached
        let at_upper = if one && was_below {
            false
        } else if one && was_above {
            true
        } else {
            d > 0.0
        };
        self.status[out] = if lo == up {
            VarStatus::AtLower
        } else if at_upper {
            if up.is_finite() { VarStatus::AtUpper } else { VarStatus::AtLower }
        } else if lo.is_finite() {
            VarStatus::AtLower
        } else {
            VarStatus::AtUpper
        };
        self.x[out] = self.nonbasic_value(out);
        self.status[q] = VarStatus::Basic;
        self.refactor()?;
        Ok(StepResult::Continue)
    }

    fn basis(&self) -> Basis {
        Basis { num_vars: self.n, status: self.status.clone() }
    }

    fn finish_optimal(&self) -> (LpOutcome, Basis) {
        let (n, m) = (self.n, self.m);
        let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        let y = self.btran(&cb);
        let primal: Vec<f64> = self.x[..n].to_vec();
        let objective_value = primal.iter().zip(&self.p.objective).map(|(a, b)| a * b).sum();
        let reduced_costs = (0..n).map(|j| self.cost[j] - self.column_dot(j, &y)).collect();
        let _ = m;
        let outcome = LpOutcome {
            status: LpStatus::Optimal,
            primal,
            objective_value,
            duals: self.p.tracked_rows.iter().map(|&r| y[r]).collect(),
            row_duals: y,
            reduced_costs,
            farkas: Vec::new(),
            ray: Vec::new(),
            iterations: self.iterations,
        };
        (outcome, self.basis())
    }

    fn finish_infeasible(&self, y: Vec<f64>) -> (LpOutcome, Basis) {
        let farkas = y
            .iter()
            .zip(&self.p.rows)
            .map(|(&v, row)| match row.sense {
                Sense::Le => -v,
                _ => v,
            })
            .map(|v| if v == 0.0 { 0.0 } else { v })
            .collect();
        let outcome = LpOutcome {
            status: LpStatus::Infeasible,
            primal: Vec::new(),
            objective_value: f64::NAN,
            duals: Vec::new(),
            row_duals: Vec::new(),
            reduced_costs: Vec::new(),
            farkas,
            ray: Vec::new(),
            iterations: self.iterations,
        };
        (outcome, self.basis())
    }

    fn finish_unbounded(&self, ray: Vec<f64>) -> (LpOutcome, Basis) {
        let outcome = LpOutcome {
            status: LpStatus::Unbounded,
            primal: self.x[..self.n].to_vec(),
            objective_value: f64::NEG_INFINITY,
            duals: Vec::new(),
            row_duals: Vec::new(),
            reduced_costs: Vec::new(),
            farkas: Vec::new(),
            ray,
            iterations: self.iterations,
        };
        (outcome, self.basis())
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` if a pivot falls below `tol`.
fn invert(mut a: Vec<f64>, k: usize, tol: f64) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; k * k];
    for i in 0..k {
        inv[i * k + i] = 1.0;
    }
    for c in 0..k {
        let p = (c..k).max_by(|&x, &y| a[x * k + c].abs().total_cmp(&a[y * k + c].abs()))?;
        let piv = a[p * k + c];
        if piv.abs() <= tol {
            return None;
        }
        if p != c {
            for t in 0..k {
                a.swap(p * k + t, c * k + t);
                inv.swap(p * k + t, c * k + t);
            }
        }
        for t in 0..k {
            a[c * k + t] /= piv;
            inv[c * k + t] /= piv;
        }
        for i in 0..k {
            let f = a[i * k + c];
            if i != c && f != 0.0 {
                for t in 0..k {
                    a[i * k + t] -= f * a[c * k + t];
                    inv[i * k + t] -= f * inv[c * k + t];
                }
            }
        }
    }
    Some(inv)
}

/// Checks a Farkas certificate: with rows normalized to `≥` form,
/// `farkas·b` must exceed the supremum of `(farkasᵀA)·x` over the box.
/// Returns the certified gap (positive when the certificate is valid).
pub fn farkas_gap(problem: &LpProblem, farkas: &[f64]) -> f64 {
    let mut g = vec![0.0; problem.num_vars];
    let mut fb = 0.0;
    for (row, &f) in problem.rows.iter().zip(farkas) {
        let s = match row.sense {
            Sense::Le => -1.0,
            _ => 1.0,
        };
        if row.sense != Sense::Eq && f < -1e-12 {
            return f64::NEG_INFINITY;
        }
        for &(j, a) in &row.coeffs {
            g[j] += f * s * a;
        }
        fb += f * s * row.rhs;
    }
    let mut sup = 0.0;
    for (gj, &(lo, up)) in g.iter().zip(&problem.var_bounds) {
        if gj.abs() <= 1e-12 {
            continue;
        }
        let b = if *gj > 0.0 { up } else { lo };
        if !b.is_finite() {
            return f64::NEG_INFINITY;
        }
        sup += gj * b;
    }
    fb - sup
}

/// Dual objective `b·y + Σ_j (bound term of reduced cost)` for an optimal outcome.
pub fn dual_objective(problem: &LpProblem, outcome: &LpOutcome) -> f64 {
    let by: f64 = problem.rows.iter().zip(&outcome.row_duals).map(|(r, y)| r.rhs * y).sum();
    let bounds: f64 = outcome
        .reduced_costs
        .iter()
        .zip(&problem.var_bounds)
        .zip(&outcome.primal)
        .map(|((&d, &(lo, up)), &x)| {
            if d > 0.0 && lo.is_finite() {
                d * lo
            } else if d < 0.0 && up.is_finite() {
                d * up
            } else {
                d * x
            }
        })
        .sum();
    by + bounds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_with_x(x: f64) -> LpProblem {
        // min y + z, 2 <= y <= 8, x pinned
        let mut p = LpProblem::new(3);
        p.objective = vec![0.0, 1.0, 1.0];
        p.var_bounds = vec![(x, x), (2.0, 8.0), (0.0, f64::INFINITY)];
        p.add_row(vec![(0, -2.0), (1, -3.0), (2, 5.0)], Sense::Ge, 17.0);
        p.add_row(vec![(1, 3.0), (2, 2.0)], Sense::Ge, 10.0);
        p.add_row(vec![(0, 2.0), (2, -1.0)], Sense::Ge, -10.0);
        p.add_row(vec![(0, -5.0), (1, 10.0), (2, 2.0)], Sense::Ge, 11.0);
        p.add_row(vec![(0, 1.0), (1, 1.0), (2, 2.0)], Sense::Ge, 15.0);
        p
    }

    #[test]
    fn toy_at_x_two() {
        let out = solve_lp(&toy_with_x(2.0)).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.primal[1] - 2.0).abs() < 1e-9);
        assert!((out.primal[2] - 5.5).abs() < 1e-9);
        assert!((out.objective_value - 7.5).abs() < 1e-9);
    }

    #[test]
    fn identity_case() {
        let mut p = LpProblem::new(1);
        p.objective = vec![1.0];
        p.add_row(vec![(0, 1.0)], Sense::Ge, 0.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert_eq!(out.primal, vec![0.0]);
        assert_eq!(out.objective_value, 0.0);
    }

    #[test]
    fn contradictory_rows_give_farkas() {
        let mut p = LpProblem::new(1);
        p.add_row(vec![(0, 1.0)], Sense::Ge, 1.0);
        p.add_row(vec![(0, 1.0)], Sense::Le, 0.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
        let scale = out.farkas[0];
        assert!(scale > 0.0);
        assert!((out.farkas[1] / scale - 1.0).abs() < 1e-12);
        assert!(farkas_gap(&p, &out.farkas) > 0.0);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = LpProblem::new(2);
        p.objective = vec![-1.0, 0.0];
        p.add_row(vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
        assert!(out.ray[0] > 0.0);
        assert!(out.ray[0] - out.ray[1] <= 1e-12);
    }

    #[test]
    fn fixing_duals_are_zero_when_inactive() {
        let p = toy_with_x(2.0);
        let base = solve_lp(&p).unwrap();
        let out = solve_lp_with_fixings(&p, &[(1, base.primal[1]), (2, base.primal[2])]).unwrap();
        // y sits at its own lower bound, so the fixing row is not needed
        assert!((out.objective_value - 7.5).abs() < 1e-9);
        assert_eq!(out.duals.len(), 2);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x0 - x1, x0 + x1 = 4, x0 - x1 >= -2, x1 free
        let mut p = LpProblem::new(2);
        p.objective = vec![1.0, -1.0];
        p.var_bounds[1] = (f64::NEG_INFINITY, f64::INFINITY);
        p.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 4.0);
        p.add_row(vec![(0, 1.0), (1, -1.0)], Sense::Ge, -2.0);
        let out = solve_lp(&p).unwrap();
        assert!((out.objective_value + 2.0).abs() < 1e-9);
        assert!((dual_objective(&p, &out) - out.objective_value).abs() < 1e-9);
    }

    #[test]
    fn invalid_bounds_rejected() {
        let mut p = LpProblem::new(1);
        p.var_bounds[0] = (1.0, 0.0);
        assert!(matches!(solve_lp(&p), Err(LpError::InvalidProblem(_))));
    }

    #[test]
    fn warm_start_after_added_row() {
        let p = toy_with_x(2.0);
        let mut solver = SimplexSolver::default();
        let (_, basis) = solver.solve(&p).unwrap();
        let mut q = p.clone();
        q.add_row(vec![(1, 1.0)], Sense::Ge, 3.0);
        let (warm, _) = solver.solve_warm(&q, Some(&basis)).unwrap();
        let cold = solve_lp(&q).unwrap();
        assert!((warm.objective_value - cold.objective_value).abs() < 1e-9);
    }
}
