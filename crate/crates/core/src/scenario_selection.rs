//! Choosing which scenarios the master keeps explicitly.
//!
//! Scenarios are clustered by their opportunity-cost profiles `V_ij`, the
//! recourse of scenario `j` at the first stage that is optimal for scenario
//! `i` alone. One representative per cluster is retained in the master.

use crate::master_bnc::tree::{branch_and_cut, ApScope, Retention, TreeConfig};
use crate::cuts::Cut;
use crate::lp::LpError;
use crate::two_stage::TwoStageProblem;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionMode {
    None,
    Random,
    Clustered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub mode: RetentionMode,
    /// Share of scenarios retained as actual master blocks.
    pub actual_fraction: f64,
    /// Share of scenarios used as artificial blocks.
    pub artificial_fraction: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Node budget of each single-scenario solve.
    pub single_node_limit: usize,
    pub single_time_limit: Duration,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            mode: RetentionMode::None,
            actual_fraction: 0.10,
            artificial_fraction: 0.05,
            seed: 0,
            restarts: 50,
            single_node_limit: 10_000,
            single_time_limit: Duration::from_secs(30),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RetentionPlan {
    pub clusters: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    /// One weight vector over all scenarios per artificial scenario.
    pub alphas: Vec<Vec<f64>>,
    /// Opportunity costs, empty unless clustering was used.
    pub v_matrix: Vec<Vec<f64>>,
}

impl RetentionPlan {
    pub fn retention(&self) -> Retention {
        let mut retained = self.representatives.clone();
        retained.sort_unstable();
        Retention { retained, artificial: self.alphas.clone() }
    }
}

/// Scenario count for a fraction, at least one when the fraction is positive.
pub fn count_for(fraction: f64, scenarios: usize) -> usize {
    if fraction <= 0.0 || scenarios == 0 {
        return 0;
    }
    ((fraction * scenarios as f64).round() as usize).clamp(1, scenarios)
}

/// `V_ij = Q_j(x̂_i, ŷ_i)` where `(x̂_i, ŷ_i)` solves the problem with scenario `i` alone.
pub fn opportunity_cost_matrix(
    p: &TwoStageProblem,
    cfg: &SelectionConfig,
    separator: &dyn Fn(&[f64]) -> Vec<Cut>,
) -> Result<Vec<Vec<f64>>, LpError> {
    let ns = p.num_scenarios();
    let tree_cfg = TreeConfig {
        two_step: true,
        ap_scope: ApScope::SpOnly,
        node_limit: Some(cfg.single_node_limit),
        time_limit: Some(cfg.single_time_limit),
        ..TreeConfig::default()
    };
    let mut v = Vec::with_capacity(ns);
    for i in 0..ns {
        let mut single = p.clone();
        single.scenario_rhs = vec![p.scenario_rhs[i].clone()];
        single.probs = vec![1.0];
        single.theta_lower = vec![p.theta_lower[i]];
        let out = branch_and_cut(&single, &Retention::default(), &tree_cfg, separator)?;
        let (Some(x), Some(y)) = (out.x, out.y) else {
            return Err(LpError::InvalidProblem(format!("scenario {i} alone has no incumbent")));
        };
        let mut row = Vec::with_capacity(ns);
        for j in 0..ns {
            row.push(p.recourse(&p.scenario_rhs[j], &x, &y)?.unwrap_or(f64::INFINITY));
        }
        v.push(row);
    }
    Ok(v)
}

/// Error of representing `cluster` by `rep`: `|C|/|Ω| · |V_rr − mean_{j∈C} V_rj|`.
pub fn cluster_error(v: &[Vec<f64>], cluster: &[usize], rep: usize) -> f64 {
    if cluster.is_empty() {
        return 0.0;
    }
    let mean = cluster.iter().map(|&j| v[rep][j]).sum::<f64>() / cluster.len() as f64;
    cluster.len() as f64 / v.len() as f64 * (v[rep][rep] - mean).abs()
}

/// Best representative of a cluster and its error; lowest id on ties.
fn best_rep(v: &[Vec<f64>], cluster: &[usize]) -> (usize, f64) {
    let mut best = (cluster[0], f64::INFINITY);
    for &r in cluster {
        let e = cluster_error(v, cluster, r);
        if e < best.1 {
            best = (r, e);
        }
    }
    best
}

fn total_error(v: &[Vec<f64>], labels: &[usize], k: usize) -> (f64, Vec<Vec<usize>>, Vec<usize>) {
    let mut clusters = vec![Vec::new(); k];
    for (j, &c) in labels.iter().enumerate() {
        clusters[c].push(j);
    }
    let mut total = 0.0;
    let mut reps = Vec::with_capacity(k);
    for c in &clusters {
        if c.is_empty() {
            return (f64::INFINITY, clusters, reps);
        }
        let (r, e) = best_rep(v, c);
        total += e;
        reps.push(r);
    }
    (total, clusters, reps)
}

fn assign(v: &[Vec<f64>], medoids: &[usize]) -> Vec<usize> {
    (0..v.len())
        .map(|j| {
            let mut best = (0, f64::INFINITY);
            for (c, &r) in medoids.iter().enumerate() {
                let d = (v[r][j] - v[r][r]).abs();
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

fn seed_medoids(v: &[Vec<f64>], k: usize, first: usize) -> Vec<usize> {
    let mut medoids = vec![first];
    while medoids.len() < k {
        let mut far = (0, f64::NEG_INFINITY);
        for j in 0..v.len() {
            if medoids.contains(&j) {
                continue;
            }
            let d = medoids.iter().map(|&r| (v[r][j] - v[r][r]).abs()).fold(f64::INFINITY, f64::min);
            if d > far.1 {
                far = (j, d);
            }
        }
        medoids.push(far.0);
    }
    medoids
}

/// Single-move local search on the true total error.
fn improve(v: &[Vec<f64>], labels: &mut [usize], k: usize) -> f64 {
    let mut current = total_error(v, labels, k).0;
    loop {
        let mut moved = false;
        for j in 0..labels.len() {
            let original = labels[j];
            for c in 0..k {
                if c == original {
                    continue;
                }
                labels[j] = c;
                let e = total_error(v, labels, k).0;
                if e < current - 1e-12 {
                    current = e;
                    moved = true;
                    break;
                }
                labels[j] = original;
            }
        }
        if !moved {
            return current;
        }
    }
}

/// Labelings visited by the exhaustive search before falling back to k-medoids.
const EXHAUSTIVE_LIMIT: f64 = 2e5;

/// Exact minimum over set partitions, enumerated as restricted growth strings.
fn exhaustive(v: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = v.len();
    let mut labels = vec![0usize; n];
    let mut best = (f64::INFINITY, labels.clone());
    fn visit(v: &[Vec<f64>], k: usize, labels: &mut Vec<usize>, i: usize, used: usize, best: &mut (f64, Vec<usize>)) {
        let n = labels.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            let e = total_error(v, labels, k).0;
            if e < best.0 - 1e-12 {
                *best = (e, labels.clone());
            }
            return;
        }
        for c in 0..(used + 1).min(k) {
            labels[i] = c;
            visit(v, k, labels, i + 1, used.max(c + 1), best);
        }
    }
    visit(v, k, &mut labels, 0, 0, &mut best);
    best.1
}

/// Partitions scenarios into `k` clusters minimizing the summed cluster
/// error; returns the clusters and their representatives. Small cases are
/// solved exactly, larger ones by restarted k-medoids with local search.
pub fn cluster_and_select(v: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = v.len();
    let k = k.min(n);
    if k == 0 {
        return (Vec::new(), Vec::new());
    }
    if (k as f64).powi(n as i32) <= EXHAUSTIVE_LIMIT {
        let (_, clusters, reps) = total_error(v, &exhaustive(v, k), k);
        return (clusters, reps);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let firsts: Vec<usize> = std::iter::once(0).chain((0..restarts).map(|_| rng.random_range(0..n))).collect();
    for first in firsts {
        let medoids = seed_medoids(v, k, first);
        let mut labels = assign(v, &medoids);
        // every medoid keeps its own cluster non-empty
        for (c, &r) in medoids.iter().enumerate() {
            labels[r] = c;
        }
        let e = improve(v, &mut labels, k);
        if best.as_ref().is_none_or(|(b, _)| e < *b - 1e-12) {
            best = Some((e, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    let (_, clusters, reps) = total_error(v, &labels, k);
    (clusters, reps)
}

/// Random convex weights over `pool`, one vector per artificial scenario.
pub fn make_artificial(num_scenarios: usize, pool: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if pool.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let mut alpha = vec![0.0; num_scenarios];
            for &w in pool {
                alpha[w] = rng.random_range(0.0..1.0);
            }
            let total: f64 = alpha.iter().sum();
            alpha.iter_mut().for_each(|a| *a /= total);
            alpha
        })
        .collect()
}

/// Retained and artificial scenarios for the configured mode.
pub fn build_plan(
    p: &TwoStageProblem,
    cfg: &SelectionConfig,
    separator: &dyn Fn(&[f64]) -> Vec<Cut>,
) -> Result<RetentionPlan, LpError> {
    let ns = p.num_scenarios();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = count_for(cfg.actual_fraction, ns);
    let mut plan = match cfg.mode {
        RetentionMode::None => return Ok(RetentionPlan::default()),
        RetentionMode::Random => {
            let mut ids: Vec<usize> = (0..ns).collect();
            ids.shuffle(&mut rng);
            let mut reps = ids[..k].to_vec();
            reps.sort_unstable();
            RetentionPlan { representatives: reps, ..RetentionPlan::default() }
        }
        RetentionMode::Clustered => {
            let v = opportunity_cost_matrix(p, cfg, separator)?;
            let (clusters, representatives) = cluster_and_select(&v, k, cfg.restarts, cfg.seed);
            RetentionPlan { clusters, representatives, alphas: Vec::new(), v_matrix: v }
        }
    };
    // a plan that retains everything leaves nothing for the subproblems
    if plan.representatives.len() == ns {
        plan.representatives.pop();
    }
    let pool: Vec<usize> = (0..ns).filter(|w| !plan.representatives.contains(w)).collect();
    plan.alphas = make_artificial(ns, &pool, count_for(cfg.artificial_fraction, ns), &mut rng);
    Ok(plan)
}
