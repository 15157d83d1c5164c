use crate::{AnyError, LayoutArg};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Duration;
use twatsp::master_bnc::{solve, SolveReport, SolveStatus, SolverConfig, Variant};
use twatsp::model::{generate_instance, sample_scenarios, to_json_string, Layout, DEFAULT_COV, DEFAULT_ETA};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Profile {
    /// n ∈ {5, 6, 7}, |Ω| ∈ {10, 20}, seeds 1–3, 120 s.
    Desk,
    /// n ∈ {10, 13, 15, 18, 20, 23, 25}, |Ω| = 100, seeds 1–10, 3 h.
    Full,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "desk")]
    profile: Profile,
    #[arg(long, value_enum, default_value = "nw")]
    layout: LayoutArg,
    /// Customer counts (overrides the profile).
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Scenario counts (overrides the profile).
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<usize>>,
    /// Instance seeds (overrides the profile).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',', default_value = "bd,tbd,bdp,tbdp,bds,tbds", value_parser = crate::parse_variant)]
    variants: Vec<Variant>,
    /// Per-run wall-clock limit in seconds (overrides the profile).
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    #[arg(long, default_value_t = 0.10)]
    frac_actual: f64,
    #[arg(long, default_value_t = 0.05)]
    frac_artificial: f64,
    /// Multiplies the generated shift length.
    #[arg(long, default_value_t = 1.0)]
    shift_scale: f64,
    #[arg(long, default_value_t = DEFAULT_COV)]
    cov: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long, default_value = "bench")]
    out: PathBuf,
}

#[derive(Clone, Debug)]
struct Job {
    n: usize,
    scenarios: usize,
    seed: u64,
    variant: Variant,
}

impl Job {
    fn name(&self, layout: &str) -> String {
        format!("{layout}_n{}_s{}_seed{}", self.n, self.scenarios, self.seed)
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    instance: &'a str,
    n: usize,
    scenarios: usize,
    seed: u64,
    wall_ms: f64,
    report: &'a SolveReport,
}

struct Run {
    job: Job,
    instance: String,
    report: SolveReport,
    wall: Duration,
}

pub fn run(a: BenchArgs) -> Result<(), AnyError> {
    let (sizes, counts, seeds, limit) = match a.profile {
        Profile::Desk => (vec![5, 6, 7], vec![10, 20], (1..=3).collect::<Vec<u64>>(), 120.0),
        Profile::Full => (vec![10, 13, 15, 18, 20, 23, 25], vec![100], (1..=10).collect(), 10_800.0),
    };
    let sizes = a.sizes.clone().unwrap_or(sizes);
    let counts = a.scenarios.clone().unwrap_or(counts);
    let seeds = a.seeds.clone().unwrap_or(seeds);
    let limit = a.time_limit.unwrap_or(limit);
    let layout: Layout = a.layout.into();
    let tag = match a.layout {
        LayoutArg::Nw => "nw",
        LayoutArg::Rc => "rc",
    };

    let mut jobs = Vec::new();
    for &n in &sizes {
        for &scenarios in &counts {
            for &seed in &seeds {
                for &variant in &a.variants {
                    jobs.push(Job { n, scenarios, seed, variant });
                }
            }
        }
    }
    let runs_dir = a.out.join("runs");
    std::fs::create_dir_all(&runs_dir)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.workers.max(1)).build()?;
    let runs: Vec<Run> = pool.install(|| {
        jobs.par_iter()
            .map(|job| -> Result<Run, AnyError> {
                let mut inst = generate_instance(layout, job.n, job.seed);
                inst.shift *= a.shift_scale;
                let sc = sample_scenarios(&inst, job.scenarios, a.cov, a.eta, job.seed, false);
                let mut cfg = SolverConfig::new(job.variant);
                cfg.tree.time_limit = Some(Duration::from_secs_f64(limit));
                cfg.tree.gap_tol = a.gap;
                cfg.selection.seed = job.seed;
                cfg.selection.actual_fraction = a.frac_actual;
                cfg.selection.artificial_fraction = a.frac_artificial;
                let solution = solve(&inst, &sc, &cfg)?;
                let instance = job.name(tag);
                let record = RunRecord {
                    instance: &instance,
                    n: job.n,
                    scenarios: job.scenarios,
                    seed: job.seed,
                    wall_ms: solution.wall_time.as_secs_f64() * 1e3,
                    report: &solution.report,
                };
                let path = runs_dir.join(format!("{instance}_{}.json", job.variant));
                let tmp = path.with_extension("json.tmp");
                std::fs::write(&tmp, to_json_string(&record) + "\n")?;
                std::fs::rename(&tmp, &path)?;
                Ok(Run { job: job.clone(), instance, report: solution.report, wall: solution.wall_time })
            })
            .collect::<Result<_, _>>()
    })?;

    std::fs::write(a.out.join("summary.csv"), summary_csv(&runs)?)?;
    std::fs::write(a.out.join("summary.md"), summary_md(&runs, &a.variants, limit))?;
    Ok(())
}

fn summary_csv(runs: &[Run]) -> Result<Vec<u8>, AnyError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "instance",
        "n",
        "scenarios",
        "seed",
        "variant",
        "status",
        "objective",
        "lower_bound",
        "gap_pct",
        "root_lower_bound",
        "root_upper_bound",
        "root_gap_pct",
        "nodes",
        "open_nodes",
        "cut_rounds",
        "generalized",
        "strengthened_multi",
        "standard_multi",
        "feasibility",
        "subtour",
    ])?;
    for r in runs {
        let p = &r.report;
        w.write_record([
            r.instance.clone(),
            r.job.n.to_string(),
            r.job.scenarios.to_string(),
            r.job.seed.to_string(),
            r.job.variant.to_string(),
            format!("{:?}", p.status),
            p.objective.to_string(),
            p.lower_bound.to_string(),
            (100.0 * p.gap).to_string(),
            p.root_lower_bound.to_string(),
            p.root_upper_bound.to_string(),
            (100.0 * p.root_gap_over_lb).to_string(),
            p.nodes.to_string(),
            p.open_nodes.to_string(),
            p.cut_rounds.to_string(),
            p.cuts.generalized.to_string(),
            p.cuts.strengthened_multi.to_string(),
            p.cuts.standard_multi.to_string(),
            p.cuts.feasibility.to_string(),
            p.cuts.subtour.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn summary_md(runs: &[Run], variants: &[Variant], limit: f64) -> String {
    let mut groups: BTreeMap<(usize, usize), Vec<&Run>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.job.n, r.job.scenarios)).or_default().push(r);
    }
    type Metric = (&'static str, fn(&[&Run], f64) -> f64);
    let metrics: [Metric; 10] = [
        ("# Solved", |rs, _| rs.iter().filter(|r| r.report.status == SolveStatus::Optimal).count() as f64),
        ("Time to opt. (min.)", |rs, limit| {
            mean(rs.iter().map(|r| if r.report.status == SolveStatus::Optimal { r.wall.as_secs_f64() } else { limit } / 60.0))
        }),
        ("Optimality gap (%)", |rs, _| mean(rs.iter().map(|r| 100.0 * r.report.gap))),
        ("Lower Bound", |rs, _| mean(rs.iter().map(|r| r.report.lower_bound))),
        ("Upper Bound", |rs, _| mean(rs.iter().map(|r| r.report.objective))),
        ("Root Node Gap (%)", |rs, _| {
            mean(rs.iter().map(|r| 100.0 * r.report.root_gap_over_lb))
        }),
        ("Nodes", |rs, _| mean(rs.iter().map(|r| r.report.nodes as f64))),
        ("Iterations", |rs, _| mean(rs.iter().map(|r| r.report.cut_rounds as f64))),
        ("Optimality cuts", |rs, _| mean(rs.iter().map(|r| r.report.optimality_cuts as f64))),
        ("Subtour cuts", |rs, _| mean(rs.iter().map(|r| r.report.cuts.subtour as f64))),
    ];
    let mut out = String::new();
    let header: Vec<String> = variants.iter().map(|v| v.name().to_uppercase()).collect();
    for ((n, k), rs) in &groups {
        let instances = rs.iter().map(|r| r.job.seed).collect::<std::collections::BTreeSet<_>>().len();
        let _ = writeln!(out, "### n = {n}, |Ω| = {k} ({instances} instances)\n");
        let _ = writeln!(out, "| Metric | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(variants.len()));
        for (name, f) in &metrics {
            let cells: Vec<String> = variants
                .iter()
                .map(|v| {
                    let sel: Vec<&Run> = rs.iter().copied().filter(|r| r.job.variant == *v).collect();
                    let value = f(&sel, limit);
                    if *name == "# Solved" {
                        format!("{value}/{}", sel.len())
                    } else {
                        format!("{value:.2}")
                    }
                })
                .collect();
            let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    out
}
