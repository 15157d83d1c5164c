//! Problem data for the time window assignment TSP with stochastic travel
//! times: instances, scenario sets, solutions, evaluation, generators and
//! JSON files.

use crate::lp::{LpError, LpProblem, LpStatus, Sense, SimplexSolver};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Number of customers; nodes are `0..=n` with node 0 the depot.
    pub n: usize,
    pub coords: Vec<(f64, f64)>,
    /// Row-major `(n+1)×(n+1)` Euclidean distances.
    pub d: Vec<f64>,
    /// Service time per node, `service[0] = 0`.
    pub service: Vec<f64>,
    pub shift: f64,
    pub t0: f64,
    pub sigma: f64,
    pub phi: f64,
    pub psi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    /// Row-major `(n+1)×(n+1)` travel-time matrix per scenario.
    pub scenarios: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub big_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstStageSolution {
    /// Customers in visiting order; the depot is implicit at both ends.
    pub route: Vec<usize>,
    /// `(y_s, y_e)` per customer, indexed by customer − 1.
    pub tw: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondStageSolution {
    /// Departure time per node, `w[0] = t0`.
    pub w: Vec<f64>,
    pub e: Vec<f64>,
    pub l: Vec<f64>,
    pub o: f64,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    ClusteredRc,
    RandomNw,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid first-stage solution: {0}")]
    InvalidFirstStage(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl Instance {
    pub fn nodes(&self) -> usize {
        self.n + 1
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.nodes() + j]
    }

    /// Builds an instance from coordinates, recomputing distances.
    #[allow(clippy::too_many_arguments)]
    pub fn from_coords(
        coords: Vec<(f64, f64)>,
        customer_service: Vec<f64>,
        shift: f64,
        t0: f64,
        sigma: f64,
        phi: f64,
        psi: f64,
    ) -> Result<Self, ModelError> {
        if coords.is_empty() || customer_service.len() + 1 != coords.len() {
            return Err(ModelError::InvalidData(format!(
                "{} coordinates need {} service times, got {}",
                coords.len(),
                coords.len().saturating_sub(1),
                customer_service.len()
            )));
        }
        let nodes = coords.len();
        let mut d = vec![0.0; nodes * nodes];
        for i in 0..nodes {
            for j in 0..nodes {
                let (dx, dy) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
                d[i * nodes + j] = dx.hypot(dy);
            }
        }
        let mut service = vec![0.0];
        service.extend(customer_service);
        let inst = Self { n: nodes - 1, coords, d, service, shift, t0, sigma, phi, psi };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidData(m.to_string()));
        let nodes = self.nodes();
        if self.coords.len() != nodes || self.service.len() != nodes || self.d.len() != nodes * nodes {
            return bad("array lengths do not match n");
        }
        if self.d.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("distances must be finite and nonnegative");
        }
        if self.service.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("service times must be finite and nonnegative");
        }
        if !(self.shift > 0.0) || !self.t0.is_finite() {
            return bad("shift length must be positive");
        }
        if [self.sigma, self.phi, self.psi].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return bad("weights must be finite and nonnegative");
        }
        Ok(())
    }
}

impl ScenarioSet {
    /// Wraps matrices with explicit probabilities and computes the big-M
    /// constant as the largest total travel time over all arcs.
    pub fn new(scenarios: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, ModelError> {
        if scenarios.is_empty() || scenarios.len() != probs.len() {
            return Err(ModelError::InvalidData("need one probability per scenario".into()));
        }
        let len = scenarios[0].len();
        if scenarios.iter().any(|s| s.len() != len || s.iter().any(|v| !v.is_finite() || *v < 0.0)) {
            return Err(ModelError::InvalidData("travel times must be finite, nonnegative and equally sized".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 || probs.iter().any(|p| *p < 0.0) {
            return Err(ModelError::InvalidData(format!("probabilities sum to {total}")));
        }
        let big_m = scenarios.iter().map(|s| s.iter().sum::<f64>()).fold(0.0, f64::max);
        Ok(Self { scenarios, probs, big_m })
    }

    pub fn uniform(scenarios: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let k = scenarios.len();
        Self::new(scenarios, vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Deterministic set whose only scenario is the distance matrix.
    pub fn deterministic(instance: &Instance) -> Self {
        Self::uniform(vec![instance.d.clone()]).expect("distances are valid travel times")
    }
}

impl FirstStageSolution {
    pub fn validate(&self, instance: &Instance) -> Result<(), ModelError> {
        let n = instance.n;
        let mut seen = vec![false; n + 1];
        if self.route.len() != n || self.tw.len() != n {
            return Err(ModelError::InvalidFirstStage(format!("route must visit all {n} customers")));
        }
        for &c in &self.route {
            if c == 0 || c > n || seen[c] {
                return Err(ModelError::InvalidFirstStage(format!("customer {c} is invalid or repeated")));
            }
            seen[c] = true;
        }
        if self.tw.iter().any(|&(s, e)| !(s >= 0.0 && e >= 0.0 && s.is_finite() && e.is_finite())) {
            return Err(ModelError::InvalidFirstStage("time windows must be finite and nonnegative".into()));
        }
        for (k, &(s, e)) in self.tw.iter().enumerate() {
            if e - s < instance.service[k + 1] - 1e-7 {
                return Err(ModelError::InvalidFirstStage(format!(
                    "window of customer {} is shorter than its service time",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    /// Arcs `(i, j)` traveled by the route, including both depot arcs.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        let mut nodes = vec![0];
        nodes.extend(&self.route);
        nodes.push(0);
        nodes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn distance(&self, instance: &Instance) -> f64 {
        self.arcs().iter().map(|&(i, j)| instance.dist(i, j)).sum()
    }

    pub fn width_cost(&self, instance: &Instance) -> f64 {
        self.tw.iter().map(|&(s, e)| instance.sigma * (e - s)).sum()
    }
}

/// Minimal earliness, lateness and overtime cost of one scenario for a fixed
/// route and windows. Departures are LP variables, so waiting is allowed.
pub fn scenario_recourse(
    instance: &Instance,
    travel: &[f64],
    big_m: f64,
    first_stage: &FirstStageSolution,
) -> Result<SecondStageSolution, ModelError> {
    let n = instance.n;
    let nodes = n + 1;
    let (w, e, l, o) = (0, n, 2 * n, 3 * n);
    let mut lp = LpProblem::new(3 * n + 1);
    for j in 0..n {
        lp.objective[e + j] = instance.phi;
        lp.objective[l + j] = instance.phi;
    }
    lp.objective[o] = instance.psi;
    let mut traveled = vec![false; nodes * nodes];
    for (i, j) in first_stage.arcs() {
        traveled[i * nodes + j] = true;
    }
    for i in 0..nodes {
        for j in 1..nodes {
            if i == j {
                continue;
            }
            let slack = if traveled[i * nodes + j] { 0.0 } else { big_m };
            let rhs = travel[i * nodes + j] + instance.service[j] - slack;
            if i == 0 {
                lp.add_row(vec![(w + j - 1, 1.0)], Sense::Ge, instance.t0 + rhs);
            } else {
                lp.add_row(vec![(w + j - 1, 1.0), (w + i - 1, -1.0)], Sense::Ge, rhs);
            }
        }
    }
    for j in 1..nodes {
        let (ys, ye) = first_stage.tw[j - 1];
        lp.add_row(vec![(e + j - 1, 1.0), (w + j - 1, 1.0)], Sense::Ge, ys - instance.service[j]);
        lp.add_row(vec![(l + j - 1, 1.0), (w + j - 1, -1.0)], Sense::Ge, -ye);
        lp.add_row(vec![(o, 1.0), (w + j - 1, -1.0)], Sense::Ge, travel[j * nodes] - instance.shift);
    }
    let (out, _) = SimplexSolver::default().solve(&lp)?;
    if out.status != LpStatus::Optimal {
        return Err(ModelError::Lp(LpError::NumericalBreakdown(format!(
            "recourse LP ended with status {:?}",
            out.status
        ))));
    }
    let x = &out.primal;
    let mut wv = vec![instance.t0];
    wv.extend_from_slice(&x[w..w + n]);
    Ok(SecondStageSolution {
        w: wv,
        e: x[e..e + n].to_vec(),
        l: x[l..l + n].to_vec(),
        o: x[o],
        cost: out.objective_value,
    })
}

/// Total expected cost `distance + σ·widths + Σ_ω p_ω Q_ω` and the
/// per-scenario second-stage solutions.
pub fn evaluate(
    instance: &Instance,
    scenarios: &ScenarioSet,
    first_stage: &FirstStageSolution,
) -> Result<(f64, Vec<SecondStageSolution>), ModelError> {
    use rayon::prelude::*;
    first_stage.validate(instance)?;
    let seconds: Vec<SecondStageSolution> = scenarios
        .scenarios
        .par_iter()
        .map(|t| scenario_recourse(instance, t, scenarios.big_m, first_stage))
        .collect::<Result<_, _>>()?;
    let expected: f64 = seconds.iter().zip(&scenarios.probs).map(|(s, p)| p * s.cost).sum();
    Ok((first_stage.distance(instance) + first_stage.width_cost(instance) + expected, seconds))
}

pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_PHI: f64 = 3.0;
pub const DEFAULT_PSI: f64 = 4.0;
pub const DEFAULT_COV: f64 = 0.25;
pub const DEFAULT_ETA: f64 = 0.35;
/// Shift length as a multiple of the nearest-neighbor tour plus service.
pub const SHIFT_FACTOR: f64 = 1.4;
pub const LAYOUT_BOX: f64 = 100.0;

fn nearest_neighbor_length(coords: &[(f64, f64)]) -> f64 {
    let dist = |a: usize, b: usize| (coords[a].0 - coords[b].0).hypot(coords[a].1 - coords[b].1);
    let mut visited = vec![false; coords.len()];
    visited[0] = true;
    let (mut at, mut total) = (0, 0.0);
    for _ in 1..coords.len() {
        let next = (0..coords.len())
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| dist(at, a).total_cmp(&dist(at, b)))
            .expect("unvisited node");
        total += dist(at, next);
        visited[next] = true;
        at = next;
    }
    total + dist(at, 0)
}

/// Random instance on the `[0, 100]²` square.
///
/// * `RandomNw`: depot and customers uniform, service uniform integer in `[5, 20]`.
/// * `ClusteredRc`: 3–5 Gaussian clusters (std 8) around uniform centers in
///   `[15, 85]²`, clamped to the square, depot at the center, service 10.
pub fn generate_instance(layout: Layout, n: usize, seed: u64) -> Instance {
    assert!(n >= 1, "an instance needs at least one customer");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n + 1);
    let service: Vec<f64>;
    match layout {
        Layout::RandomNw => {
            for _ in 0..=n {
                coords.push((rng.random_range(0.0..LAYOUT_BOX), rng.random_range(0.0..LAYOUT_BOX)));
            }
            service = (0..n).map(|_| f64::from(rng.random_range(5..=20))).collect();
        }
        Layout::ClusteredRc => {
            let k = rng.random_range(3..=5);
            let centers: Vec<(f64, f64)> =
                (0..k).map(|_| (rng.random_range(15.0..85.0), rng.random_range(15.0..85.0))).collect();
            let spread = Normal::new(0.0, 8.0).expect("valid normal");
            coords.push((LAYOUT_BOX / 2.0, LAYOUT_BOX / 2.0));
            for _ in 0..n {
                let (cx, cy) = centers[rng.random_range(0..k)];
                let x = (cx + spread.sample(&mut rng)).clamp(0.0, LAYOUT_BOX);
                let y = (cy + spread.sample(&mut rng)).clamp(0.0, LAYOUT_BOX);
                coords.push((x, y));
            }
            service = vec![10.0; n];
        }
    }
    let t0 = 0.0;
    let shift = t0 + SHIFT_FACTOR * (nearest_neighbor_length(&coords) + service.iter().sum::<f64>());
    Instance::from_coords(coords, service, shift, t0, DEFAULT_SIGMA, DEFAULT_PHI, DEFAULT_PSI)
        .expect("generated data is valid")
}

/// Travel times `t = d + δ` with `δ ~ Gamma(1/cov², η·d·cov²)`, so that
/// `E[δ] = η·d` and `sd(δ)/E[δ] = cov`. Scenario `ω` draws from ChaCha8
/// stream `ω` of `seed`, arcs in row-major order; with `symmetric` only
/// `i < j` is drawn and mirrored.
pub fn sample_scenarios(
    instance: &Instance,
    count: usize,
    cov: f64,
    eta: f64,
    seed: u64,
    symmetric: bool,
) -> ScenarioSet {
    assert!(count >= 1 && cov > 0.0 && eta >= 0.0, "invalid scenario parameters");
    let nodes = instance.nodes();
    let shape = 1.0 / (cov * cov);
    let scenarios = (0..count)
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64);
            let mut t = instance.d.clone();
            for i in 0..nodes {
                for j in 0..nodes {
                    if i == j || (symmetric && j < i) {
                        continue;
                    }
                    let d = instance.dist(i, j);
                    let delta = sample_delta(&mut rng, shape, eta * d * cov * cov);
                    t[i * nodes + j] = d + delta;
                    if symmetric {
                        t[j * nodes + i] = instance.dist(j, i) + delta;
                    }
                }
            }
            t
        })
        .collect();
    ScenarioSet::uniform(scenarios).expect("sampled travel times are valid")
}

pub fn sample_delta(rng: &mut ChaCha8Rng, shape: f64, scale: f64) -> f64 {
    if scale <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, scale).expect("positive gamma parameters").sample(rng)
}

/// JSON formatter that writes every float with 17 significant digits and
/// non-finite values as `null`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    coords: Vec<[f64; 2]>,
    service: Vec<f64>,
    #[serde(rename = "T")]
    shift: f64,
    t0: f64,
    sigma: f64,
    phi: f64,
    psi: f64,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    probs: Vec<f64>,
    scenarios: Vec<Vec<f64>>,
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, ModelError> {
    serde_json::from_str(text).map_err(|e| ModelError::Parse(format!("{what}: {e}")))
}

pub fn instance_to_json(instance: &Instance) -> String {
    to_json_string(&InstanceFile {
        n: instance.n,
        coords: instance.coords.iter().map(|&(x, y)| [x, y]).collect(),
        service: instance.service[1..].to_vec(),
        shift: instance.shift,
        t0: instance.t0,
        sigma: instance.sigma,
        phi: instance.phi,
        psi: instance.psi,
    })
}

pub fn instance_from_json(text: &str) -> Result<Instance, ModelError> {
    let f: InstanceFile = parse(text, "instance")?;
    if f.coords.len() != f.n + 1 {
        return Err(ModelError::Parse(format!("instance: field `coords` needs {} entries, found {}", f.n + 1, f.coords.len())));
    }
    if f.service.len() != f.n {
        return Err(ModelError::Parse(format!("instance: field `service` needs {} entries, found {}", f.n, f.service.len())));
    }
    let coords = f.coords.into_iter().map(|[x, y]| (x, y)).collect();
    Instance::from_coords(coords, f.service, f.shift, f.t0, f.sigma, f.phi, f.psi)
}

pub fn scenarios_to_json(set: &ScenarioSet) -> String {
    to_json_string(&ScenarioFile { probs: set.probs.clone(), scenarios: set.scenarios.clone() })
}

pub fn scenarios_from_json(text: &str) -> Result<ScenarioSet, ModelError> {
    let f: ScenarioFile = parse(text, "scenarios")?;
    ScenarioSet::new(f.scenarios, f.probs)
}

pub fn write_instance(instance: &Instance, path: &Path) -> Result<(), ModelError> {
    Ok(std::fs::write(path, instance_to_json(instance))?)
}

pub fn read_instance(path: &Path) -> Result<Instance, ModelError> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_scenarios(set: &ScenarioSet, path: &Path) -> Result<(), ModelError> {
    Ok(std::fs::write(path, scenarios_to_json(set))?)
}

pub fn read_scenarios(path: &Path) -> Result<ScenarioSet, ModelError> {
    scenarios_from_json(&std::fs::read_to_string(path)?)
}
