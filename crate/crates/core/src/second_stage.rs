//! The routing model in two-stage form, plus subproblem wrappers that speak
//! in arcs and time windows.
//!
//! Variable layout: `x` holds one entry per arc (see [`arc_index`]); `y` is
//! `[y_s(1..=n) | y_e(1..=n)]`; each scenario's `z` is
//! `[w(1..=n) | e(1..=n) | l(1..=n) | o]`.

use crate::cuts::{arc_index, num_arcs};
use crate::lp::{LpError, Row, Sense};
use crate::model::{FirstStageSolution, Instance, ScenarioSet, SecondStageSolution};
use crate::two_stage::{self, Block, RecourseRow, Solved, TwoStageProblem};
use serde::{Deserialize, Serialize};

pub fn ys_index(_n: usize, j: usize) -> usize {
    j - 1
}

pub fn ye_index(n: usize, j: usize) -> usize {
    n + j - 1
}

/// Right-hand side of every recourse row for one travel-time matrix.
pub fn scenario_rhs(instance: &Instance, travel: &[f64], big_m: f64) -> Vec<f64> {
    let n = instance.n;
    let nodes = n + 1;
    let mut h = Vec::with_capacity(n * nodes + 3 * n);
    for i in 0..nodes {
        for j in 1..nodes {
            if i != j {
                let base = travel[i * nodes + j] + instance.service[j] - big_m;
                h.push(if i == 0 { base + instance.t0 } else { base });
            }
        }
    }
    for j in 1..nodes {
        h.push(-instance.service[j]);
    }
    h.extend(std::iter::repeat_n(0.0, n));
    for j in 1..nodes {
        h.push(travel[j * nodes] - instance.shift);
    }
    h
}

/// Rows of the departure, earliness, lateness and overtime constraints.
fn recourse_rows(instance: &Instance, big_m: f64) -> Vec<RecourseRow> {
    let n = instance.n;
    let nx = num_arcs(n);
    let ny = 2 * n;
    let z = |k: usize| nx + ny + k;
    let (w, e, l, o) = (0, n, 2 * n, 3 * n);
    let mut rows = Vec::new();
    for i in 0..=n {
        for j in 1..=n {
            if i == j {
                continue;
            }
            // w_j − w_i − M x_ij ≥ t_ij + s_j − M
            let mut coeffs = vec![(arc_index(n, i, j), -big_m), (z(w + j - 1), 1.0)];
            if i > 0 {
                coeffs.push((z(w + i - 1), -1.0));
            }
            rows.push(RecourseRow { coeffs, sense: Sense::Ge, screen: true });
        }
    }
    for j in 1..=n {
        // e_j + w_j − y_s ≥ −s_j
        let coeffs = vec![(nx + ys_index(n, j), -1.0), (z(e + j - 1), 1.0), (z(w + j - 1), 1.0)];
        rows.push(RecourseRow { coeffs, sense: Sense::Ge, screen: false });
    }
    for j in 1..=n {
        // l_j − w_j + y_e ≥ 0
        let coeffs = vec![(nx + ye_index(n, j), 1.0), (z(l + j - 1), 1.0), (z(w + j - 1), -1.0)];
        rows.push(RecourseRow { coeffs, sense: Sense::Ge, screen: false });
    }
    for j in 1..=n {
        // o − w_j ≥ t_j0 − T
        let coeffs = vec![(z(o), 1.0), (z(w + j - 1), -1.0)];
        rows.push(RecourseRow { coeffs, sense: Sense::Ge, screen: false });
    }
    rows
}

/// Degree equalities and minimum window widths.
fn first_stage_rows(instance: &Instance) -> Vec<Row> {
    let n = instance.n;
    let nx = num_arcs(n);
    let mut rows = Vec::new();
    for j in 0..=n {
        let into = (0..=n).filter(|&i| i != j).map(|i| (arc_index(n, i, j), 1.0)).collect();
        rows.push(Row::new(into, Sense::Eq, 1.0));
        let out = (0..=n).filter(|&i| i != j).map(|i| (arc_index(n, j, i), 1.0)).collect();
        rows.push(Row::new(out, Sense::Eq, 1.0));
    }
    for j in 1..=n {
        let coeffs = vec![(nx + ye_index(n, j), 1.0), (nx + ys_index(n, j), -1.0)];
        rows.push(Row::new(coeffs, Sense::Ge, instance.service[j]));
    }
    rows
}

pub fn build_two_stage(instance: &Instance, scenarios: &ScenarioSet) -> TwoStageProblem {
    let n = instance.n;
    let nx = num_arcs(n);
    let mut c = vec![0.0; nx];
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                c[arc_index(n, i, j)] = instance.dist(i, j);
            }
        }
    }
    let mut d = vec![-instance.sigma; n];
    d.extend(std::iter::repeat_n(instance.sigma, n));
    let mut f = vec![0.0; n];
    f.extend(std::iter::repeat_n(instance.phi, 2 * n));
    f.push(instance.psi);
    TwoStageProblem {
        n_x: nx,
        n_y: 2 * n,
        n_z: 3 * n + 1,
        c,
        d,
        f,
        x_bounds: vec![(0.0, 1.0); nx],
        y_bounds: vec![(0.0, f64::INFINITY); 2 * n],
        z_bounds: vec![(0.0, f64::INFINITY); 3 * n + 1],
        first_stage_rows: first_stage_rows(instance),
        recourse_rows: recourse_rows(instance, scenarios.big_m),
        scenario_rhs: scenarios.scenarios.iter().map(|t| scenario_rhs(instance, t, scenarios.big_m)).collect(),
        probs: scenarios.probs.clone(),
        theta_lower: vec![0.0; scenarios.len()],
    }
}

/// Arc vector of a route.
pub fn route_to_x(n: usize, route: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; num_arcs(n)];
    let mut prev = 0;
    for &c in route.iter().chain(std::iter::once(&0)) {
        x[arc_index(n, prev, c)] = 1.0;
        prev = c;
    }
    x
}

/// Follows successors from the depot; `None` unless `x` is one integral tour.
pub fn x_to_route(n: usize, x: &[f64]) -> Option<Vec<usize>> {
    let mut route = Vec::with_capacity(n);
    let mut at = 0;
    for _ in 0..=n {
        let next = (0..=n).find(|&j| j != at && x[arc_index(n, at, j)] > 0.5)?;
        if next == 0 {
            break;
        }
        if route.contains(&next) {
            return None;
        }
        route.push(next);
        at = next;
    }
    (route.len() == n).then_some(route)
}

pub fn windows_to_y(tw: &[(f64, f64)]) -> Vec<f64> {
    let mut y: Vec<f64> = tw.iter().map(|w| w.0).collect();
    y.extend(tw.iter().map(|w| w.1));
    y
}

pub fn y_to_windows(y: &[f64]) -> Vec<(f64, f64)> {
    let n = y.len() / 2;
    (0..n).map(|k| (y[k], y[n + k])).collect()
}

pub fn first_stage_vectors(n: usize, fs: &FirstStageSolution) -> (Vec<f64>, Vec<f64>) {
    (route_to_x(n, &fs.route), windows_to_y(&fs.tw))
}

pub fn z_to_second_stage(instance: &Instance, z: &[f64]) -> SecondStageSolution {
    let n = instance.n;
    let mut w = vec![instance.t0];
    w.extend_from_slice(&z[..n]);
    let e = z[n..2 * n].to_vec();
    let l = z[2 * n..3 * n].to_vec();
    let o = z[3 * n];
    let cost = instance.phi * (e.iter().sum::<f64>() + l.iter().sum::<f64>()) + instance.psi * o;
    SecondStageSolution { w, e, l, o, cost }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpDuals {
    pub nu: Vec<f64>,
    pub eta_s: Vec<f64>,
    pub eta_e: Vec<f64>,
    pub primal: SecondStageSolution,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub y_bar: Vec<(f64, f64)>,
    pub z_bar: Vec<SecondStageSolution>,
    pub mu: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityOutcome {
    pub epsilon_total: f64,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn solve_sp(
    instance: &Instance,
    scenarios: &ScenarioSet,
    scenario: usize,
    x_fix: &[f64],
    y_fix: &[(f64, f64)],
) -> Result<SpDuals, LpError> {
    let p = build_two_stage(instance, scenarios);
    let y = windows_to_y(y_fix);
    match p.solve_sp(&p.scenario_rhs[scenario], x_fix, &y)? {
        Solved::Feasible(sp) => {
            let n = instance.n;
            Ok(SpDuals {
                nu: sp.nu,
                eta_s: sp.eta[..n].to_vec(),
                eta_e: sp.eta[n..].to_vec(),
                primal: z_to_second_stage(instance, &sp.z),
                objective: sp.objective,
            })
        }
        Solved::Infeasible => Err(LpError::NumericalBreakdown("recourse reported infeasible".into())),
    }
}

/// Aggregated subproblem over `subset` with its probabilities used as given.
pub fn solve_ap(
    instance: &Instance,
    scenarios: &ScenarioSet,
    subset: &[usize],
    x_fix: &[f64],
) -> Result<Solved<ApResult>, LpError> {
    let p = build_two_stage(instance, scenarios);
    let blocks: Vec<Block> = p.blocks_for(subset);
    Ok(match p.solve_ap(&blocks, x_fix)? {
        Solved::Feasible(ap) => Solved::Feasible(ApResult {
            y_bar: y_to_windows(&ap.y),
            z_bar: ap.z.iter().map(|z| z_to_second_stage(instance, z)).collect(),
            mu: ap.mu,
            objective: ap.objective,
        }),
        Solved::Infeasible => Solved::Infeasible,
    })
}

pub fn solve_feasibility(
    instance: &Instance,
    scenarios: &ScenarioSet,
    x_fix: &[f64],
    y_fix: &[(f64, f64)],
) -> Result<FeasibilityOutcome, LpError> {
    let p = build_two_stage(instance, scenarios);
    let r = p.solve_feasibility(&p.all_blocks(), x_fix, &windows_to_y(y_fix))?;
    Ok(FeasibilityOutcome { epsilon_total: r.epsilon_total, lambda: r.lambda, beta: r.beta, x: r.x, y: r.y })
}

pub fn generic_result(r: &FeasibilityOutcome) -> two_stage::FeasibilityResult {
    two_stage::FeasibilityResult {
        epsilon_total: r.epsilon_total,
        lambda: r.lambda.clone(),
        beta: r.beta.clone(),
        x: r.x.clone(),
        y: r.y.clone(),
    }
}
