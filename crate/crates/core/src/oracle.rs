//! Ground truth for small instances: every tour is enumerated and, for each
//! tour, one LP over the windows and all scenarios gives its exact cost.
//! Tours are visited in order of increasing distance so that the bound
//! `distance + σ·Σ s_i` (windows are at least the service time and recourse
//! is nonnegative) can skip tours that cannot beat the incumbent.

use crate::lp::{LpError, LpProblem, LpStatus, Sense, SimplexSolver};
use crate::model::{evaluate, FirstStageSolution, Instance, ModelError, ScenarioSet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_CUSTOMERS: usize = 8;
const CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} customers exceed the enumeration limit of {MAX_CUSTOMERS}")]
    TooLarge(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub cost: f64,
    pub first_stage: FirstStageSolution,
    /// Tours considered (all permutations of the customers).
    pub tours_enumerated: usize,
    /// Tours whose joint LP was actually solved.
    pub tours_solved: usize,
}

/// Joint LP over windows and every scenario's timing for a fixed route.
/// Returns `(σ·widths + expected recourse, windows)`.
pub fn tour_cost(instance: &Instance, scenarios: &ScenarioSet, route: &[usize]) -> Result<(f64, Vec<(f64, f64)>), LpError> {
    let n = instance.n;
    let nodes = n + 1;
    let k = scenarios.len();
    let block = 3 * n + 1;
    let base = 2 * n;
    let var = |w: usize, part: usize, j: usize| base + w * block + part * n + j - 1;
    let o_var = |w: usize| base + w * block + 3 * n;
    let mut lp = LpProblem::new(base + k * block);
    for j in 0..n {
        lp.objective[j] = -instance.sigma;
        lp.objective[n + j] = instance.sigma;
        lp.add_row(vec![(n + j, 1.0), (j, -1.0)], Sense::Ge, instance.service[j + 1]);
    }
    let mut order = vec![0];
    order.extend_from_slice(route);
    let mut pred = vec![usize::MAX; nodes];
    for pair in order.windows(2) {
        pred[pair[1]] = pair[0];
    }
    for (w, t) in scenarios.scenarios.iter().enumerate() {
        let p = scenarios.probs[w];
        for j in 1..nodes {
            lp.objective[var(w, 1, j)] = p * instance.phi;
            lp.objective[var(w, 2, j)] = p * instance.phi;
        }
        lp.objective[o_var(w)] = p * instance.psi;
        for &j in route {
            let i = pred[j];
            let rhs = t[i * nodes + j] + instance.service[j];
            if i == 0 {
                lp.add_row(vec![(var(w, 0, j), 1.0)], Sense::Ge, instance.t0 + rhs);
            } else {
                lp.add_row(vec![(var(w, 0, j), 1.0), (var(w, 0, i), -1.0)], Sense::Ge, rhs);
            }
        }
        for j in 1..nodes {
            lp.add_row(vec![(var(w, 1, j), 1.0), (var(w, 0, j), 1.0), (j - 1, -1.0)], Sense::Ge, -instance.service[j]);
            lp.add_row(vec![(var(w, 2, j), 1.0), (var(w, 0, j), -1.0), (n + j - 1, 1.0)], Sense::Ge, 0.0);
            lp.add_row(vec![(o_var(w), 1.0), (var(w, 0, j), -1.0)], Sense::Ge, t[j * nodes] - instance.shift);
        }
    }
    let mut solver = SimplexSolver::default();
    loop {
        let (out, _) = solver.solve(&lp)?;
        if out.status != LpStatus::Optimal {
            return Err(LpError::NumericalBreakdown(format!("tour LP ended with status {:?}", out.status)));
        }
        // rows of arcs not on the route only matter if waiting grows past M
        let x = &out.primal;
        let mut added = false;
        for (w, t) in scenarios.scenarios.iter().enumerate() {
            for i in 0..nodes {
                for j in 1..nodes {
                    if i == j || pred[j] == i {
                        continue;
                    }
                    let wi = if i == 0 { instance.t0 } else { x[var(w, 0, i)] };
                    let rhs = t[i * nodes + j] + instance.service[j] - scenarios.big_m;
                    if x[var(w, 0, j)] - wi < rhs - 1e-9 {
                        let mut coeffs = vec![(var(w, 0, j), 1.0)];
                        let mut r = rhs;
                        if i == 0 {
                            r += instance.t0;
                        } else {
                            coeffs.push((var(w, 0, i), -1.0));
                        }
                        lp.add_row(coeffs, Sense::Ge, r);
                        added = true;
                    }
                }
            }
        }
        if !added {
            let windows = (0..n).map(|j| (x[j], x[n + j])).collect();
            return Ok((out.objective_value, windows));
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (1..=n).collect();
    let mut all = vec![p.clone()];
    loop {
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            return all;
        };
        let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).expect("successor exists");
        p.swap(i, j);
        p[i + 1..].reverse();
        all.push(p.clone());
    }
}

pub fn solve_exact(instance: &Instance, scenarios: &ScenarioSet) -> Result<ExactSolution, OracleError> {
    let n = instance.n;
    if n > MAX_CUSTOMERS {
        return Err(OracleError::TooLarge(n));
    }
    let tours = permutations(n);
    let distance = |r: &[usize]| {
        let mut prev = 0;
        let mut total = 0.0;
        for &c in r.iter().chain(std::iter::once(&0)) {
            total += instance.dist(prev, c);
            prev = c;
        }
        total
    };
    let mut ranked: Vec<(f64, usize)> = tours.iter().enumerate().map(|(k, r)| (distance(r), k)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let floor = instance.sigma * instance.service.iter().sum::<f64>();

    let mut best: Option<(f64, usize, Vec<(f64, f64)>)> = None;
    let mut solved = 0;
    for chunk in ranked.chunks(CHUNK) {
        let live: Vec<&(f64, usize)> = chunk
            .iter()
            .filter(|(d, _)| best.as_ref().is_none_or(|b| d + floor < b.0))
            .collect();
        if live.is_empty() {
            break;
        }
        solved += live.len();
        let costs: Vec<(f64, usize, Vec<(f64, f64)>)> = live
            .par_iter()
            .map(|&&(d, k)| tour_cost(instance, scenarios, &tours[k]).map(|(c, tw)| (d + c, k, tw)))
            .collect::<Result<_, _>>()?;
        for cand in costs {
            if best.as_ref().is_none_or(|b| cand.0 < b.0 - 1e-12) {
                best = Some(cand);
            }
        }
    }
    let (cost, k, tw) = best.expect("at least one tour");
    Ok(ExactSolution {
        cost,
        first_stage: FirstStageSolution { route: tours[k].clone(), tw },
        tours_enumerated: tours.len(),
        tours_solved: solved,
    })
}

/// Expected total cost of a fixed first stage.
pub fn recourse_of(first_stage: &FirstStageSolution, instance: &Instance, scenarios: &ScenarioSet) -> Result<f64, ModelError> {
    evaluate(instance, scenarios, first_stage).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(1).len(), 1);
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(6).len(), 720);
    }
}
