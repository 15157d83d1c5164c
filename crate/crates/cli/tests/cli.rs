use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twatsp"))
}

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy_problem.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report JSON on stdout")
}

#[test]
fn toy_problem_solves_under_every_variant() {
    for v in ["bd", "tbd", "bdp", "tbdp", "bds", "tbds"] {
        let out = run(&["solve", "--problem", toy().to_str().unwrap(), "--variant", v]);
        assert_eq!(out.status.code(), Some(0), "{v}: {}", String::from_utf8_lossy(&out.stderr));
        let r = report(&out);
        assert!((r["objective"].as_f64().unwrap() - 7.5).abs() < 1e-6);
        assert!((r["x"][0].as_f64().unwrap() - 2.0).abs() < 1e-6);
        assert_eq!(r["variant"], v);
    }
}

#[test]
fn standard_benders_on_the_toy_needs_cuts() {
    let out = run(&["solve", "--problem", toy().to_str().unwrap(), "--variant", "bd"]);
    let r = report(&out);
    assert!(r["optimality_cuts"].as_u64().unwrap() >= 3);
}

#[test]
fn unknown_variant_is_a_usage_error() {
    let out = run(&["solve", "--problem", toy().to_str().unwrap(), "--variant", "xyz"]);
    assert_eq!(out.status.code(), Some(64));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn node_limit_exits_with_two() {
    let out = run(&["solve", "--problem", toy().to_str().unwrap(), "--node-limit", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["status"], "NodeLimit");
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&["generate", "--layout", "nw", "--n", "5", "--scenarios", "10", "--seed", "42", "--out", d]);
    assert!(out.status.success());
    let sc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("scenarios.json")).unwrap()).unwrap();
    assert_eq!(sc["scenarios"].as_array().unwrap().len(), 10);

    let inst = dir.path().join("instance.json");
    let scen = dir.path().join("scenarios.json");
    let log = dir.path().join("cuts.csv");
    let out = run(&[
        "solve",
        "--instance",
        inst.to_str().unwrap(),
        "--scenarios",
        scen.to_str().unwrap(),
        "--variant",
        "tbd",
        "--cut-log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let route = r["first_stage"]["route"].as_array().unwrap();
    assert_eq!(route.len(), 5);
    let text = std::fs::read_to_string(log).unwrap();
    assert_eq!(text.lines().next(), Some("family,scenario,node,violation"));
}

#[test]
fn bench_writes_one_row_per_run_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for k in 0..2 {
        let out_dir = dir.path().join(format!("b{k}"));
        let out = run(&[
            "bench",
            "--sizes",
            "4",
            "--scenarios",
            "4",
            "--seeds",
            "1,2",
            "--variants",
            "bd,tbds",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 4);
        let md = std::fs::read_to_string(out_dir.join("summary.md")).unwrap();
        assert!(md.contains("| Metric | BD | TBDS |"));
        assert!(md.contains("| # Solved | 2/2 | 2/2 |"));
        assert_eq!(std::fs::read_dir(out_dir.join("runs")).unwrap().count(), 4);
        csvs.push(csv);
    }
    assert_eq!(csvs[0], csvs[1]);
}
