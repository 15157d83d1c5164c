//! Generic two-stage stochastic program with continuous recourse:
//!
//! ```text
//! min c·x + d·y + Σ_ω p_ω f·z_ω
//! s.t. first-stage rows over (x, y), x integer
//!      W x + T y + S z_ω (≥|≤|=) h_ω   for every scenario ω
//! ```
//!
//! Only the right-hand side `h_ω` varies across scenarios. This module
//! builds and solves the continuous subproblems: the per-scenario
//! subproblem with `(x, y)` fixed, the aggregated subproblem over `y` and a
//! set of scenario blocks with `x` fixed, and the elastic feasibility
//! problem. Fixed first-stage values are substituted into the right-hand
//! sides; their multipliers are recovered as `-Σ_r π_r a_rj`, which equals
//! the dual of an explicit fixing row `x_j = x̄_j`.

use crate::lp::{LpError, LpProblem, LpStatus, Row, Sense, SimplexSolver};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecourseRow {
    /// Coefficients over the stacked vector `[x | y | z]`.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    /// The row is (nearly) redundant whenever every `x` it touches is zero,
    /// so solvers may leave it out and only add it back when violated.
    pub screen: bool,
}

/// Bounds as `[lower, upper]` pairs with `null` for an infinite side.
mod open_bounds {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(bounds: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        let open: Vec<(Option<f64>, Option<f64>)> =
            bounds.iter().map(|&(lo, up)| (lo.is_finite().then_some(lo), up.is_finite().then_some(up))).collect();
        open.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        let open: Vec<(Option<f64>, Option<f64>)> = Vec::deserialize(d)?;
        Ok(open
            .into_iter()
            .map(|(lo, up)| (lo.unwrap_or(f64::NEG_INFINITY), up.unwrap_or(f64::INFINITY)))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageProblem {
    pub n_x: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub f: Vec<f64>,
    #[serde(with = "open_bounds")]
    pub x_bounds: Vec<(f64, f64)>,
    #[serde(with = "open_bounds")]
    pub y_bounds: Vec<(f64, f64)>,
    #[serde(with = "open_bounds")]
    pub z_bounds: Vec<(f64, f64)>,
    /// Rows over `[x | y]`.
    pub first_stage_rows: Vec<Row>,
    pub recourse_rows: Vec<RecourseRow>,
    /// `h_ω` for every scenario, one entry per recourse row.
    pub scenario_rhs: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    /// Lower bound on each scenario's recourse value.
    pub theta_lower: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpResult {
    pub objective: f64,
    pub z: Vec<f64>,
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub objective: f64,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    /// `f·z` of every block.
    pub block_costs: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityResult {
    pub epsilon_total: f64,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Outcome of a subproblem that may be infeasible for the given first stage.
#[derive(Clone, Debug, PartialEq)]
pub enum Solved<T> {
    Feasible(T),
    Infeasible,
}

impl<T> Solved<T> {
    pub fn feasible(self) -> Option<T> {
        match self {
            Solved::Feasible(t) => Some(t),
            Solved::Infeasible => None,
        }
    }
}

/// One scenario block of a subproblem: right-hand side and objective weight.
#[derive(Clone, Copy, Debug)]
pub struct Block<'a> {
    pub rhs: &'a [f64],
    pub weight: f64,
}

const SCREEN_ZERO: f64 = 1e-12;
const ROW_CHECK_TOL: f64 = 1e-9;

struct Split {
    x: Vec<(usize, f64)>,
    y: Vec<(usize, f64)>,
    z: Vec<(usize, f64)>,
}

enum YMode<'a> {
    Fixed(&'a [f64]),
    Free,
}

struct SubSolution {
    objective: f64,
    y: Vec<f64>,
    z: Vec<Vec<f64>>,
    x_grad: Vec<f64>,
    y_grad: Vec<f64>,
}

impl TwoStageProblem {
    pub fn num_scenarios(&self) -> usize {
        self.scenario_rhs.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        let (nx, ny, nz) = (self.n_x, self.n_y, self.n_z);
        if self.c.len() != nx || self.x_bounds.len() != nx {
            return Err("x data length mismatch".into());
        }
        if self.d.len() != ny || self.y_bounds.len() != ny {
            return Err("y data length mismatch".into());
        }
        if self.f.len() != nz || self.z_bounds.len() != nz {
            return Err("z data length mismatch".into());
        }
        let k = self.num_scenarios();
        if k == 0 || self.probs.len() != k || self.theta_lower.len() != k {
            return Err("scenario data length mismatch".into());
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.probs.iter().any(|&p| p < 0.0) {
            return Err(format!("probabilities must be nonnegative and sum to 1 (sum {total})"));
        }
        if self.scenario_rhs.iter().any(|h| h.len() != self.recourse_rows.len()) {
            return Err("scenario rhs length differs from recourse row count".into());
        }
        for row in &self.recourse_rows {
            if row.coeffs.iter().any(|&(j, a)| j >= nx + ny + nz || !a.is_finite()) {
                return Err("recourse row has an invalid entry".into());
            }
        }
        for row in &self.first_stage_rows {
            if row.coeffs.iter().any(|&(j, a)| j >= nx + ny || !a.is_finite()) {
                return Err("first-stage row has an invalid entry".into());
            }
        }
        Ok(())
    }

    fn split(&self, coeffs: &[(usize, f64)]) -> Split {
        let mut s = Split { x: Vec::new(), y: Vec::new(), z: Vec::new() };
        for &(j, a) in coeffs {
            if j < self.n_x {
                s.x.push((j, a));
            } else if j < self.n_x + self.n_y {
                s.y.push((j - self.n_x, a));
            } else {
                s.z.push((j - self.n_x - self.n_y, a));
            }
        }
        s
    }

    /// True cost of the recourse for one scenario, or `None` if infeasible.
    pub fn recourse(&self, rhs: &[f64], x: &[f64], y: &[f64]) -> Result<Option<f64>, LpError> {
        Ok(self.solve_sp(rhs, x, y)?.feasible().map(|r| r.objective))
    }

    /// `c·x + d·y + Σ_ω p_ω Q(x, y, ω)`, or `None` when some scenario is infeasible.
    pub fn total_cost(&self, x: &[f64], y: &[f64]) -> Result<Option<f64>, LpError> {
        let mut total = dot(&self.c, x) + dot(&self.d, y);
        for (h, p) in self.scenario_rhs.iter().zip(&self.probs) {
            match self.recourse(h, x, y)? {
                Some(q) => total += p * q,
                None => return Ok(None),
            }
        }
        Ok(Some(total))
    }

    /// Per-scenario subproblem with `(x, y)` fixed.
    pub fn solve_sp(&self, rhs: &[f64], x: &[f64], y: &[f64]) -> Result<Solved<SpResult>, LpError> {
        let blocks = [Block { rhs, weight: 1.0 }];
        Ok(match self.solve_sub(&blocks, x, YMode::Fixed(y), false)? {
            Solved::Feasible(s) => Solved::Feasible(SpResult {
                objective: s.objective,
                z: s.z.into_iter().next().unwrap_or_default(),
                nu: s.x_grad,
                eta: s.y_grad,
            }),
            Solved::Infeasible => Solved::Infeasible,
        })
    }

    /// Aggregated subproblem: optimizes `y` jointly with every block's `z`
    /// for fixed `x`, minimizing `d·y + Σ_b weight_b f·z_b`.
    pub fn solve_ap(&self, blocks: &[Block], x: &[f64]) -> Result<Solved<ApResult>, LpError> {
        Ok(match self.solve_sub(blocks, x, YMode::Free, false)? {
            Solved::Feasible(s) => {
                let block_costs = s.z.iter().map(|z| dot(&self.f, z)).collect();
                Solved::Feasible(ApResult { objective: s.objective, y: s.y, z: s.z, block_costs, mu: s.x_grad })
            }
            Solved::Infeasible => Solved::Infeasible,
        })
    }

    /// Elastic problem `min Σ ε` over all given blocks with `(x, y)` fixed.
    pub fn solve_feasibility(&self, blocks: &[Block], x: &[f64], y: &[f64]) -> Result<FeasibilityResult, LpError> {
        match self.solve_sub(blocks, x, YMode::Fixed(y), true)? {
            Solved::Feasible(s) => Ok(FeasibilityResult {
                epsilon_total: s.objective.max(0.0),
                lambda: s.x_grad,
                beta: s.y_grad,
                x: x.to_vec(),
                y: y.to_vec(),
            }),
            Solved::Infeasible => Err(LpError::NumericalBreakdown("elastic problem reported infeasible".into())),
        }
    }

    pub fn all_blocks(&self) -> Vec<Block<'_>> {
        self.scenario_rhs
            .iter()
            .zip(&self.probs)
            .map(|(h, &p)| Block { rhs: h, weight: p })
            .collect()
    }

    pub fn blocks_for(&self, ids: &[usize]) -> Vec<Block<'_>> {
        ids.iter().map(|&i| Block { rhs: &self.scenario_rhs[i], weight: self.probs[i] }).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl TwoStageProblem {
    fn solve_sub(&self, blocks: &[Block], x: &[f64], ymode: YMode, elastic: bool) -> Result<Solved<SubSolution>, LpError> {
        let splits: Vec<Split> = self.recourse_rows.iter().map(|r| self.split(&r.coeffs)).collect();
        let fs_splits: Vec<(usize, Split)> = match ymode {
            YMode::Free => self
                .first_stage_rows
                .iter()
                .enumerate()
                .map(|(i, r)| (i, self.split(&r.coeffs)))
                .filter(|(_, s)| !s.y.is_empty())
                .collect(),
            YMode::Fixed(_) => Vec::new(),
        };
        // constant part of each recourse row once x (and a fixed y) are substituted
        let fixed_part: Vec<f64> = splits
            .iter()
            .map(|s| {
                let xs: f64 = s.x.iter().map(|&(j, a)| a * x[j]).sum();
                let ys: f64 = match ymode {
                    YMode::Fixed(y) => s.y.iter().map(|&(j, a)| a * y[j]).sum(),
                    YMode::Free => 0.0,
                };
                xs + ys
            })
            .collect();
        let screened_out: Vec<bool> = splits
            .iter()
            .zip(&self.recourse_rows)
            .map(|(s, r)| r.screen && s.x.iter().all(|&(j, _)| x[j].abs() <= SCREEN_ZERO))
            .collect();
        let mut active: Vec<Vec<bool>> = blocks.iter().map(|_| screened_out.iter().map(|&o| !o).collect()).collect();
        let mut solver = SimplexSolver::default();

        loop {
            let mut lp = LpProblem::new(0);
            let y_off = lp.num_vars;
            if let YMode::Free = ymode {
                for j in 0..self.n_y {
                    let (lo, up) = self.y_bounds[j];
                    lp.add_var(self.d[j], lo, up);
                }
            }
            let mut z_off = Vec::with_capacity(blocks.len());
            for b in blocks {
                z_off.push(lp.num_vars);
                for j in 0..self.n_z {
                    let (lo, up) = self.z_bounds[j];
                    let cost = if elastic { 0.0 } else { b.weight * self.f[j] };
                    lp.add_var(cost, lo, up);
                }
            }
            // (block, recourse row) for recourse rows, (usize::MAX, fs row) for first-stage rows
            let mut origin: Vec<(usize, usize)> = Vec::new();
            for (bi, b) in blocks.iter().enumerate() {
                for (k, s) in splits.iter().enumerate() {
                    if !active[bi][k] {
                        continue;
                    }
                    let mut coeffs: Vec<(usize, f64)> = s.z.iter().map(|&(j, a)| (z_off[bi] + j, a)).collect();
                    if let YMode::Free = ymode {
                        coeffs.extend(s.y.iter().map(|&(j, a)| (y_off + j, a)));
                    }
                    let sense = self.recourse_rows[k].sense;
                    if elastic {
                        let e = lp.add_var(1.0, 0.0, f64::INFINITY);
                        match sense {
                            Sense::Ge => coeffs.push((e, 1.0)),
                            Sense::Le => coeffs.push((e, -1.0)),
                            Sense::Eq => {
                                coeffs.push((e, 1.0));
                                let e2 = lp.add_var(1.0, 0.0, f64::INFINITY);
                                coeffs.push((e2, -1.0));
                            }
                        }
                    }
                    lp.add_row(coeffs, sense, b.rhs[k] - fixed_part[k]);
                    origin.push((bi, k));
                }
            }
            for (i, s) in &fs_splits {
                let row = &self.first_stage_rows[*i];
                let xs: f64 = s.x.iter().map(|&(j, a)| a * x[j]).sum();
                let coeffs = s.y.iter().map(|&(j, a)| (y_off + j, a)).collect();
                lp.add_row(coeffs, row.sense, row.rhs - xs);
                origin.push((usize::MAX, *i));
            }

            let (out, _) = solver.solve(&lp)?;
            match out.status {
                LpStatus::Infeasible => return Ok(Solved::Infeasible),
                LpStatus::Unbounded => {
                    return Err(LpError::InvalidProblem("second-stage problem is unbounded".into()))
                }
                LpStatus::Optimal => {}
            }
            let y: Vec<f64> = match ymode {
                YMode::Fixed(y) => y.to_vec(),
                YMode::Free => out.primal[y_off..y_off + self.n_y].to_vec(),
            };
            let z: Vec<Vec<f64>> = z_off.iter().map(|&o| out.primal[o..o + self.n_z].to_vec()).collect();

            let mut added = false;
            for (bi, b) in blocks.iter().enumerate() {
                for (k, s) in splits.iter().enumerate() {
                    if active[bi][k] {
                        continue;
                    }
                    let mut lhs: f64 = s.x.iter().map(|&(j, a)| a * x[j]).sum();
                    lhs += s.y.iter().map(|&(j, a)| a * y[j]).sum::<f64>();
                    lhs += s.z.iter().map(|&(j, a)| a * z[bi][j]).sum::<f64>();
                    let row = Row { coeffs: Vec::new(), sense: self.recourse_rows[k].sense, rhs: b.rhs[k] };
                    let violated = match row.sense {
                        Sense::Ge => lhs < row.rhs - ROW_CHECK_TOL,
                        Sense::Le => lhs > row.rhs + ROW_CHECK_TOL,
                        Sense::Eq => (lhs - row.rhs).abs() > ROW_CHECK_TOL,
                    };
                    if violated {
                        active[bi][k] = true;
                        added = true;
                    }
                }
            }
            if added {
                continue;
            }

            let mut x_grad = vec![0.0; self.n_x];
            let mut y_grad = vec![0.0; self.n_y];
            for (r, &(bi, k)) in origin.iter().enumerate() {
                let pi = out.row_duals[r];
                if pi == 0.0 {
                    continue;
                }
                let s = if bi == usize::MAX {
                    &fs_splits.iter().find(|(i, _)| *i == k).expect("first-stage row").1
                } else {
                    &splits[k]
                };
                for &(j, a) in &s.x {
                    x_grad[j] -= pi * a;
                }
                if let YMode::Fixed(_) = ymode {
                    for &(j, a) in &s.y {
                        y_grad[j] -= pi * a;
                    }
                }
            }
            return Ok(Solved::Feasible(SubSolution { objective: out.objective_value, y, z, x_grad, y_grad }));
        }
    }
}
