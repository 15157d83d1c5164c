use proptest::prelude::*;
use twatsp::lp::{
    dual_objective, farkas_gap, solve_lp, solve_lp_with_fixings, LpProblem, LpStatus, Sense,
};

/// Brute-force LP optimum over a finite box: every vertex is the solution of
/// some square subsystem of active rows and bounds.
fn vertex_optimum(p: &LpProblem) -> Option<f64> {
    let n = p.num_vars;
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for row in &p.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &row.coeffs {
            a[j] += v;
        }
        planes.push((a, row.rhs));
    }
    for j in 0..n {
        let (lo, up) = p.var_bounds[j];
        for b in [lo, up] {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            planes.push((a, b));
        }
    }
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&idx.iter().map(|&i| planes[i].clone()).collect::<Vec<_>>()) {
            if p.max_violation(&x) <= 1e-7 {
                let v: f64 = x.iter().zip(&p.objective).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        // next combination
        let k = idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < planes.len() - k + i {
                idx[i] += 1;
                for t in i + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(eqs: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = eqs.len();
    let mut a: Vec<Vec<f64>> = eqs
        .iter()
        .map(|(r, b)| {
            let mut row = r.clone();
            row.push(*b);
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

fn random_lp() -> impl Strategy<Value = LpProblem> {
    (2usize..=4, 1usize..=5).prop_flat_map(|(n, m)| {
        let obj = prop::collection::vec(-5i32..=5, n);
        let bounds = prop::collection::vec((-3i32..=0, 1i32..=6), n);
        let rows = prop::collection::vec(
            (prop::collection::vec(-4i32..=4, n), 0u8..3, -8i32..=8),
            m,
        );
        (Just(n), obj, bounds, rows).prop_map(|(n, obj, bounds, rows)| {
            let mut p = LpProblem::new(n);
            p.objective = obj.into_iter().map(f64::from).collect();
            p.var_bounds = bounds.into_iter().map(|(l, u)| (f64::from(l), f64::from(u))).collect();
            for (coeffs, s, rhs) in rows {
                let sense = [Sense::Ge, Sense::Le, Sense::Eq][s as usize];
                let c = coeffs
                    .into_iter()
                    .enumerate()
                    .filter(|&(_, v)| v != 0)
                    .map(|(j, v)| (j, f64::from(v)))
                    .collect();
                p.add_row(c, sense, f64::from(rhs));
            }
            p
        })
    })
}

fn check_complementary_slackness(p: &LpProblem, out: &twatsp::lp::LpOutcome) {
    for (row, &y) in p.rows.iter().zip(&out.row_duals) {
        let slack = row.activity(&out.primal) - row.rhs;
        match row.sense {
            Sense::Ge => assert!(y >= -1e-9, "≥ row dual {y} negative"),
            Sense::Le => assert!(y <= 1e-9, "≤ row dual {y} positive"),
            Sense::Eq => {}
        }
        assert!((slack * y).abs() <= 1e-7, "slack {slack} dual {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_vertex_enumeration(p in random_lp()) {
        let out = solve_lp(&p).unwrap();
        match vertex_optimum(&p) {
            Some(best) => {
                prop_assert_eq!(out.status, LpStatus::Optimal);
                prop_assert!((out.objective_value - best).abs() <= 1e-7 * (1.0 + best.abs()));
                prop_assert!(p.max_violation(&out.primal) <= 1e-7);
                let gap = (dual_objective(&p, &out) - out.objective_value).abs();
                prop_assert!(gap <= 1e-7 * (1.0 + best.abs()), "duality gap {}", gap);
                check_complementary_slackness(&p, &out);
            }
            None => {
                prop_assert_eq!(out.status, LpStatus::Infeasible);
                prop_assert!(farkas_gap(&p, &out.farkas) > 1e-9);
            }
        }
    }

    #[test]
    fn deterministic(p in random_lp()) {
        let a = solve_lp(&p).unwrap();
        let b = solve_lp(&p).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn fixing_duals_are_subgradients(p in random_lp(), k in 0usize..2, frac in 0.2f64..0.8) {
        let base = solve_lp(&p).unwrap();
        prop_assume!(base.is_optimal());
        let (lo, up) = p.var_bounds[k];
        let v = lo + frac * (up - lo);
        let at = |val: f64| solve_lp_with_fixings(&p, &[(k, val)]).unwrap();
        let mid = at(v);
        prop_assume!(mid.is_optimal());
        let h = 1e-5;
        let (left, right) = (at(v - h), at(v + h));
        prop_assume!(left.is_optimal() && right.is_optimal());
        let dual = *mid.duals.last().unwrap();
        let dl = (mid.objective_value - left.objective_value) / h;
        let dr = (right.objective_value - mid.objective_value) / h;
        let tol = 1e-3 * (1.0 + dual.abs());
        prop_assert!(dl - tol <= dual && dual <= dr + tol, "left {} dual {} right {}", dl, dual, dr);
    }
}

#[test]
fn inactive_fixings_have_zero_duals() {
    let mut p = LpProblem::new(3);
    p.objective = vec![1.0, 2.0, -1.0];
    p.var_bounds = vec![(0.0, 4.0); 3];
    p.add_row(vec![(0, 1.0), (1, 1.0), (2, 1.0)], Sense::Le, 5.0);
    p.add_row(vec![(0, 1.0), (2, -1.0)], Sense::Ge, -2.0);
    let base = solve_lp(&p).unwrap();
    let fix: Vec<(usize, f64)> = base.primal.iter().copied().enumerate().collect();
    let out = solve_lp_with_fixings(&p, &fix).unwrap();
    assert!((out.objective_value - base.objective_value).abs() < 1e-9);
    // fixing every variable at an optimum leaves one valid dual choice per
    // degenerate vertex; the duals must still price the objective exactly
    let priced: f64 = fix.iter().zip(&out.duals).map(|((_, v), y)| v * y).sum();
    let rest: f64 = p.rows.iter().zip(&out.row_duals).map(|(r, y)| r.rhs * y).sum();
    assert!((priced + rest - out.objective_value).abs() < 1e-9);
}

#[test]
fn larger_random_lps_close_duality_gap() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = 40;
        let mut p = LpProblem::new(n);
        p.objective = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.var_bounds = vec![(0.0, 10.0); n];
        for _ in 0..30 {
            let mut c = Vec::new();
            for j in 0..n {
                if rng.random_bool(0.3) {
                    c.push((j, rng.random_range(-1.0..1.0)));
                }
            }
            p.add_row(c, Sense::Le, rng.random_range(0.0..5.0));
        }
        let out = solve_lp(&p).unwrap();
        assert!(out.is_optimal());
        assert!(p.max_violation(&out.primal) <= 1e-7);
        let gap = (dual_objective(&p, &out) - out.objective_value).abs();
        assert!(gap <= 1e-7 * (1.0 + out.objective_value.abs()));
    }
}
