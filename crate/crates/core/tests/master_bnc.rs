use twatsp::lshaped::toy_problem;
use twatsp::master_bnc::*;
use twatsp::model::*;
use twatsp::oracle::solve_exact;

fn none(_: &[f64]) -> Vec<twatsp::cuts::Cut> {
    Vec::new()
}

#[test]
fn toy_solves_under_every_variant() {
    let p = toy_problem();
    for v in Variant::ALL {
        let s = solve_problem(&p, &SolverConfig::new(v), &none).unwrap();
        let r = &s.report;
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 7.5).abs() < 1e-6, "{v}: {}", r.objective);
        let x = r.x.as_ref().unwrap();
        assert!((x[0] - 2.0).abs() < 1e-6, "{v}: {x:?}");
    }
}

#[test]
fn small_instance_matches_oracle() {
    let mut inst = generate_instance(Layout::RandomNw, 5, 11);
    inst.shift *= 0.75;
    let sc = sample_scenarios(&inst, 8, DEFAULT_COV, DEFAULT_ETA, 11, false);
    let exact = solve_exact(&inst, &sc).unwrap();
    for v in Variant::ALL {
        let s = solve(&inst, &sc, &SolverConfig::new(v)).unwrap();
        let r = &s.report;
        assert!((r.objective - exact.cost).abs() <= 1e-5 * exact.cost.abs().max(1.0), "{v}: {} vs {}", r.objective, exact.cost);
    }
}
