mod bench;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;
use twatsp::cuts::write_cut_log;
use twatsp::master_bnc::{solve, solve_problem, ApScope, Solution, SolveStatus, SolverConfig, Variant};
use twatsp::model::{
    generate_instance, read_instance, read_scenarios, sample_scenarios, to_json_string, write_instance, write_scenarios,
    Layout, DEFAULT_COV, DEFAULT_ETA,
};
use twatsp::two_stage::TwoStageProblem;

const EXIT_LIMIT: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(name = "twatsp", version, about = "Time window assignment TSP with stochastic travel times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and a scenario set.
    Generate(GenerateArgs),
    /// Solve one instance (or a generic two-stage problem file).
    Solve(SolveArgs),
    /// Run a variant × instance matrix and write tables.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LayoutArg {
    Rc,
    Nw,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Rc => Layout::ClusteredRc,
            LayoutArg::Nw => Layout::RandomNw,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "nw")]
    layout: LayoutArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    scenarios: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_COV)]
    cov: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Use one delay per unordered pair.
    #[arg(long)]
    symmetric: bool,
    /// Output directory for `instance.json` and `scenarios.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ApScopeArg {
    Sp,
    All,
}

#[derive(Args, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value = "tbds", value_parser = parse_variant)]
    pub variant: Variant,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Relative optimality tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub gap: f64,
    /// Seed for scenario retention.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.10)]
    pub frac_actual: f64,
    #[arg(long, default_value_t = 0.05)]
    pub frac_artificial: f64,
    #[arg(long, value_enum, default_value = "sp")]
    pub ap_scope: ApScopeArg,
    /// Benders rounds at fractional points of non-root nodes.
    #[arg(long, default_value_t = 0)]
    pub fractional_cuts: usize,
    #[arg(long, default_value_t = 30)]
    pub root_rounds: usize,
    /// Separate subtours at integral points only.
    #[arg(long)]
    pub integral_subtours_only: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.variant);
        cfg.tree.time_limit = self.time_limit.map(Duration::from_secs_f64);
        cfg.tree.node_limit = self.node_limit;
        cfg.tree.gap_tol = self.gap;
        cfg.tree.ap_scope = match self.ap_scope {
            ApScopeArg::Sp => ApScope::SpOnly,
            ApScopeArg::All => ApScope::All,
        };
        cfg.tree.fractional_rounds = self.fractional_cuts;
        cfg.tree.root_rounds = self.root_rounds;
        cfg.tree.fractional_separation = !self.integral_subtours_only;
        cfg.selection.seed = self.seed;
        cfg.selection.actual_fraction = self.frac_actual;
        cfg.selection.artificial_fraction = self.frac_artificial;
        cfg
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, required_unless_present = "problem", requires = "scenarios")]
    instance: Option<PathBuf>,
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Generic two-stage problem (JSON) instead of an instance.
    #[arg(long, conflicts_with_all = ["instance", "scenarios"])]
    problem: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write one CSV line per added cut.
    #[arg(long)]
    cut_log: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a).map(|()| 0),
        Command::Solve(a) => run_solve(a),
        Command::Bench(a) => bench::run(a).map(|()| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

type AnyError = Box<dyn std::error::Error + Send + Sync>;

fn generate(a: GenerateArgs) -> Result<(), AnyError> {
    std::fs::create_dir_all(&a.out)?;
    let inst = generate_instance(a.layout.into(), a.n, a.seed);
    let sc = sample_scenarios(&inst, a.scenarios, a.cov, a.eta, a.seed, a.symmetric);
    write_instance(&inst, &a.out.join("instance.json"))?;
    write_scenarios(&sc, &a.out.join("scenarios.json"))?;
    Ok(())
}

fn run_solve(a: SolveArgs) -> Result<u8, AnyError> {
    let cfg = a.solver.config();
    let solution = if let Some(path) = &a.problem {
        let p: TwoStageProblem = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        solve_problem(&p, &cfg, &|_: &[f64]| Vec::new())?
    } else {
        let inst = read_instance(a.instance.as_deref().expect("clap enforces --instance"))?;
        let sc = read_scenarios(a.scenarios.as_deref().expect("clap enforces --scenarios"))?;
        solve(&inst, &sc, &cfg)?
    };
    let json = to_json_string(&solution.report);
    match &a.report {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    if let Some(path) = &a.cut_log {
        write_cut_log(BufWriter::new(File::create(path)?), &solution.outcome.log)?;
    }
    print_table(&solution);
    Ok(match solution.report.status {
        SolveStatus::Optimal => 0,
        SolveStatus::TimeLimit | SolveStatus::NodeLimit => EXIT_LIMIT,
    })
}

fn print_table(s: &Solution) {
    let r = &s.report;
    let rows = [
        ("variant", r.variant.to_string()),
        ("status", format!("{:?}", r.status)),
        ("objective", format!("{:.6}", r.objective)),
        ("lower bound", format!("{:.6}", r.lower_bound)),
        ("gap %", format!("{:.4}", 100.0 * r.gap)),
        ("root gap %", format!("{:.4}", 100.0 * r.root_gap)),
        ("nodes", r.nodes.to_string()),
        ("cut rounds", r.cut_rounds.to_string()),
        ("generalized", r.cuts.generalized.to_string()),
        ("strengthened", r.cuts.strengthened_multi.to_string()),
        ("standard", r.cuts.standard_multi.to_string()),
        ("feasibility", r.cuts.feasibility.to_string()),
        ("subtour", r.cuts.subtour.to_string()),
        ("time (s)", format!("{:.3}", s.wall_time.as_secs_f64())),
    ];
    for (k, v) in rows {
        eprintln!("{k:<14}{v}");
    }
    if let Some(fs) = &r.first_stage {
        eprintln!("{:<14}{:?}", "route", fs.route);
    }
}
