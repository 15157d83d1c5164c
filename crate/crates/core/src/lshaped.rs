//! Iterative multicut L-shaped loop: the master is re-solved to integer
//! optimality after every round of cuts. Small enough to trace by hand,
//! which makes it the reference driver for cut-count comparisons.

use crate::cuts::{
    feasibility_cut, generalized_cut, standard_multicut, strengthened_multicut, Aux, Cut, CutFamily, MasterPoint,
    VIOLATION_TOL,
};
use crate::lp::{LpError, LpProblem, LpStatus, Row, Sense, SimplexSolver};
use crate::two_stage::{dot, RecourseRow, Solved, TwoStageProblem};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutMode {
    /// Subproblems at the master's `(x*, y*)`.
    Standard,
    /// Aggregated subproblem first, then subproblems at `(x̄, ȳ)`.
    TwoStep { generalized: bool },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FamilyCounts {
    pub standard_multi: usize,
    pub strengthened_multi: usize,
    pub generalized: usize,
    pub feasibility: usize,
}

impl FamilyCounts {
    fn bump(&mut self, family: CutFamily) {
        match family {
            CutFamily::StandardMulti => self.standard_multi += 1,
            CutFamily::StrengthenedMulti => self.strengthened_multi += 1,
            CutFamily::Generalized => self.generalized += 1,
            CutFamily::Feasibility => self.feasibility += 1,
            CutFamily::SubtourElim => {}
        }
    }

    pub fn multicuts(&self) -> usize {
        self.standard_multi + self.strengthened_multi
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub x: Vec<f64>,
    pub y_master: Vec<f64>,
    /// `y` handed to the scenario subproblems.
    pub y_sub: Vec<f64>,
    pub master_value: f64,
    pub cuts_added: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub objective: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub iterations: usize,
    /// Every cut computed, including the final round that confirms optimality.
    pub generated: FamilyCounts,
    /// Cuts that were violated and entered the master.
    pub added: FamilyCounts,
    pub trace: Vec<IterationTrace>,
}

/// Example problem `min y + z` over integer `x ∈ [0, 10]`, `2 ≤ y ≤ 8`, `z ≥ 0`
/// with five coupling rows; optimum `x = 2, y = 2, z = 5.5`, cost 7.5.
pub fn toy_problem() -> TwoStageProblem {
    let row = |a: f64, b: f64, c: f64| RecourseRow {
        coeffs: [(0, a), (1, b), (2, c)].into_iter().filter(|&(_, v)| v != 0.0).collect(),
        sense: Sense::Ge,
        screen: false,
    };
    TwoStageProblem {
        n_x: 1,
        n_y: 1,
        n_z: 1,
        c: vec![0.0],
        d: vec![1.0],
        f: vec![1.0],
        x_bounds: vec![(0.0, 10.0)],
        y_bounds: vec![(2.0, 8.0)],
        z_bounds: vec![(0.0, f64::INFINITY)],
        first_stage_rows: Vec::new(),
        recourse_rows: vec![
            row(-2.0, -3.0, 5.0),
            row(0.0, 3.0, 2.0),
            row(2.0, 0.0, -1.0),
            row(-5.0, 10.0, 2.0),
            row(1.0, 1.0, 2.0),
        ],
        scenario_rhs: vec![vec![17.0, 10.0, -10.0, 11.0, 15.0]],
        probs: vec![1.0],
        theta_lower: vec![0.0],
    }
}

struct Master {
    lp: LpProblem,
    x_off: usize,
    y_off: usize,
    theta_off: usize,
    big_theta: usize,
}

impl Master {
    fn new(p: &TwoStageProblem) -> Self {
        let mut lp = LpProblem::new(0);
        let x_off = 0;
        for j in 0..p.n_x {
            lp.add_var(p.c[j], p.x_bounds[j].0, p.x_bounds[j].1);
        }
        let y_off = lp.num_vars;
        for j in 0..p.n_y {
            lp.add_var(0.0, p.y_bounds[j].0, p.y_bounds[j].1);
        }
        let theta_off = lp.num_vars;
        for w in 0..p.num_scenarios() {
            lp.add_var(0.0, p.theta_lower[w], f64::INFINITY);
        }
        let big_theta = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        for row in &p.first_stage_rows {
            lp.rows.push(row.clone());
        }
        // Θ ≥ d·y + Σ p θ
        let mut link = vec![(big_theta, 1.0)];
        link.extend((0..p.n_y).map(|j| (y_off + j, -p.d[j])));
        link.extend((0..p.num_scenarios()).map(|w| (theta_off + w, -p.probs[w])));
        lp.add_row(link, Sense::Ge, 0.0);
        Self { lp, x_off, y_off, theta_off, big_theta }
    }

    fn add_cut(&mut self, cut: &Cut) {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        coeffs.extend(cut.coeff_x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (self.x_off + j, v)));
        coeffs.extend(cut.coeff_y.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (self.y_off + j, v)));
        match cut.aux {
            Some(Aux::Scenario(w)) => coeffs.push((self.theta_off + w, -1.0)),
            Some(Aux::Total) => coeffs.push((self.big_theta, -1.0)),
            None => {}
        }
        self.lp.rows.push(Row::new(coeffs, Sense::Le, cut.rhs));
    }
}

/// Depth-first branch and bound over the listed integer columns.
fn solve_milp(lp: &LpProblem, ints: &[usize]) -> Result<Option<(f64, Vec<f64>)>, LpError> {
    let mut solver = SimplexSolver::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stack = vec![lp.var_bounds.clone()];
    while let Some(bounds) = stack.pop() {
        let mut node = lp.clone();
        node.var_bounds = bounds;
        let (out, _) = solver.solve(&node)?;
        match out.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(LpError::InvalidProblem("master relaxation is unbounded".into())),
            LpStatus::Optimal => {}
        }
        if best.as_ref().is_some_and(|(v, _)| out.objective_value >= v - 1e-9) {
            continue;
        }
        let frac = ints
            .iter()
            .map(|&j| (j, (out.primal[j] - out.primal[j].round()).abs()))
            .filter(|&(_, f)| f > 1e-6)
            .fold(None, |acc: Option<(usize, f64)>, (j, f)| match acc {
                Some((_, bf)) if bf >= f => acc,
                _ => Some((j, f)),
            });
        match frac {
            None => {
                let mut x = out.primal.clone();
                for &j in ints {
                    x[j] = x[j].round();
                }
                best = Some((out.objective_value, x));
            }
            Some((j, _)) => {
                let v = out.primal[j];
                let mut up = node.var_bounds.clone();
                up[j].0 = v.ceil();
                let mut down = node.var_bounds;
                down[j].1 = v.floor();
                // explore the down branch first
                stack.push(up);
                stack.push(down);
            }
        }
    }
    Ok(best)
}

pub fn solve_iterative(p: &TwoStageProblem, mode: CutMode, max_iterations: usize) -> Result<LoopReport, LpError> {
    p.validate().map_err(LpError::InvalidProblem)?;
    let mut master = Master::new(p);
    let ints: Vec<usize> = (0..p.n_x).collect();
    let mut generated = FamilyCounts::default();
    let mut added = FamilyCounts::default();
    let mut trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let ns = p.num_scenarios();

    for iteration in 1..=max_iterations {
        let Some((value, sol)) = solve_milp(&master.lp, &ints)? else {
            return Err(LpError::InvalidProblem("master problem is infeasible".into()));
        };
        let x = sol[master.x_off..master.x_off + p.n_x].to_vec();
        let y_star = sol[master.y_off..master.y_off + p.n_y].to_vec();
        let theta = sol[master.theta_off..master.theta_off + ns].to_vec();
        let point = MasterPoint { x: &x, y: &y_star, theta: &theta, big_theta: sol[master.big_theta] };

        let mut new_cuts: Vec<Cut> = Vec::new();
        let y_sub = match mode {
            CutMode::Standard => y_star.clone(),
            CutMode::TwoStep { generalized } => match p.solve_ap(&p.all_blocks(), &x)? {
                Solved::Feasible(ap) => {
                    if generalized {
                        let cut = generalized_cut(&ap, &x);
                        generated.bump(cut.family);
                        new_cuts.push(cut);
                    }
                    let cost = dot(&p.c, &x) + ap.objective;
                    if best.as_ref().is_none_or(|b| cost < b.0) {
                        best = Some((cost, x.clone(), ap.y.clone()));
                    }
                    ap.y
                }
                Solved::Infeasible => y_star.clone(),
            },
        };

        let mut all_feasible = true;
        for w in 0..ns {
            match p.solve_sp(&p.scenario_rhs[w], &x, &y_sub)? {
                Solved::Feasible(sp) => {
                    let cut = match mode {
                        CutMode::Standard => standard_multicut(&sp, &x, &y_sub, w),
                        CutMode::TwoStep { .. } => strengthened_multicut(&sp, &x, &y_sub, w),
                    };
                    generated.bump(cut.family);
                    new_cuts.push(cut);
                }
                Solved::Infeasible => all_feasible = false,
            }
        }
        if !all_feasible {
            let feas = p.solve_feasibility(&p.all_blocks(), &x, &y_sub)?;
            if let Ok(cut) = feasibility_cut(&feas) {
                generated.bump(cut.family);
                new_cuts.push(cut);
            }
        } else if let Some(cost) = p.total_cost(&x, &y_sub)? {
            if best.as_ref().is_none_or(|b| cost < b.0) {
                best = Some((cost, x.clone(), y_sub.clone()));
            }
        }

        let mut count = 0;
        for cut in &new_cuts {
            if cut.violation(&point) > VIOLATION_TOL {
                added.bump(cut.family);
                master.add_cut(cut);
                count += 1;
            }
        }
        trace.push(IterationTrace { x: x.clone(), y_master: y_star.clone(), y_sub, master_value: value, cuts_added: count });
        if count == 0 {
            let (objective, bx, by) = best.unwrap_or((value, x.clone(), y_star));
            return Ok(LoopReport { objective, x: bx, y: by, iterations: iteration, generated, added, trace });
        }
    }
    Err(LpError::IterationLimit(max_iterations))
}
