use proptest::prelude::*;

use mutual_holding::equilibrium::{compute_fields, consistency_residuals, equilibrium_drift, equilibrium_vol};
use mutual_holding::measures::{wasserstein2, Measure1D};
use mutual_holding::models::CoefficientModel;
use mutual_holding::nplayer::{
    assemble_m, game_coefficients_closed_form, game_coefficients_solve, HoldingMatrix,
};
use mutual_holding::threshold::{fixed_point_residual, solve_c_bisection, solve_c_empirical, DEFAULT_TOL};

fn weights_from(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn measure() -> impl Strategy<Value = Measure1D> {
    (1usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-10.0f64..10.0, n), prop::collection::vec(0.05f64..1.0, n))
            .prop_map(|(a, w)| Measure1D::new(a, weights_from(&w)).unwrap())
    })
}

fn drift_sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..60).prop_flat_map(|n| {
        (prop::collection::vec(-20.0f64..20.0, n), prop::collection::vec(0.05f64..1.0, n))
            .prop_map(|(b, w)| (b, weights_from(&w)))
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn w2_symmetric_and_nonnegative(m1 in measure(), m2 in measure()) {
        let d12 = wasserstein2(&m1, &m2);
        let d21 = wasserstein2(&m2, &m1);
        prop_assert!(d12 >= 0.0);
        prop_assert!((d12 - d21).abs() <= 1e-12 * (1.0 + d12));
        prop_assert!(wasserstein2(&m1, &m1) <= 1e-12);
    }

    #[test]
    fn w2_triangle(m1 in measure(), m2 in measure(), m3 in measure()) {
        let lhs = wasserstein2(&m1, &m3);
        let rhs = wasserstein2(&m1, &m2) + wasserstein2(&m2, &m3);
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn w2_of_shift_is_shift(m in measure(), delta in -5.0f64..5.0) {
        let d = wasserstein2(&m, &m.shifted(delta));
        prop_assert!((d - delta.abs()).abs() <= 1e-9);
    }

    #[test]
    fn w2_uniform_matches_best_permutation(
        a in prop::collection::vec(-5.0f64..5.0, 1..6),
        seed in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let n = a.len();
        let b = &seed[..n];
        let brute = permutations(n)
            .into_iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).powi(2)).sum::<f64>() / n as f64)
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        let d = wasserstein2(&Measure1D::uniform(&a).unwrap(), &Measure1D::uniform(b).unwrap());
        prop_assert!((d - brute).abs() <= 1e-10, "{d} vs {brute}");
    }

    #[test]
    fn threshold_is_fixed_point((b, w) in drift_sample()) {
        let r = solve_c_empirical(&b, &w, DEFAULT_TOL).unwrap();
        prop_assert!(fixed_point_residual(&b, &w, r.c).abs() <= 1e-12);
        prop_assert!(r.c >= 0.0);
        let bis = solve_c_bisection(&b, &w, 1e-13).unwrap();
        prop_assert!((bis.c - r.c).abs() <= 1e-10);
    }

    #[test]
    fn threshold_homogeneous_and_monotone((b, w) in drift_sample(), lambda in 0.1f64..10.0, bump in 0.0f64..3.0) {
        let c = solve_c_empirical(&b, &w, DEFAULT_TOL).unwrap().c;
        let scaled: Vec<f64> = b.iter().map(|x| lambda * x).collect();
        let cs = solve_c_empirical(&scaled, &w, DEFAULT_TOL).unwrap().c;
        prop_assert!((cs - lambda * c).abs() <= 1e-10 * (1.0 + lambda * c));
        let bumped: Vec<f64> = b.iter().map(|x| x + bump).collect();
        prop_assert!(solve_c_empirical(&bumped, &w, DEFAULT_TOL).unwrap().c >= c - 1e-12);
    }

    #[test]
    fn threshold_closed_forms((b, w) in drift_sample()) {
        let pos: Vec<f64> = b.iter().map(|x| x.abs()).collect();
        let mean: f64 = pos.iter().zip(&w).map(|(x, y)| x * y).sum();
        let c = solve_c_empirical(&pos, &w, DEFAULT_TOL).unwrap().c;
        prop_assert!((c - mean).abs() <= 1e-11);
        let neg: Vec<f64> = b.iter().map(|x| -x.abs() - 1e-6).collect();
        prop_assert_eq!(solve_c_empirical(&neg, &w, DEFAULT_TOL).unwrap().c, 0.0);
    }

    #[test]
    fn equilibrium_consistency(m in measure(), theta in 0.1f64..4.0, mbar in -2.0f64..2.0, sigbar in 0.1f64..3.0) {
        let model = CoefficientModel::ou(theta, mbar, sigbar).unwrap();
        let f = compute_fields(&model, 0.0, &m, DEFAULT_TOL).unwrap();
        let (r1, r2) = consistency_residuals(&f, m.weights());
        prop_assert!(r1 <= 1e-10 && r2 <= 1e-10);
        for j in 0..f.len() {
            prop_assert_eq!(f.drift[j], equilibrium_drift(f.b_vals[j], f.c));
            prop_assert_eq!(f.vol[j], equilibrium_vol(f.b_vals[j], f.c, f.sigma_vals[j]));
        }
    }

    #[test]
    fn m_is_diagonally_dominant(n in 1usize..12, raw in prop::collection::vec(0.0f64..=1.0, 144)) {
        let gamma = HoldingMatrix::new(n, raw[..n * n].to_vec()).unwrap();
        let m = assemble_m(&gamma);
        for i in 0..n {
            let off: f64 = (0..n).filter(|&k| k != i).map(|k| m[i * n + k].abs()).sum();
            prop_assert!(m[i * n + i] >= off - 1e-14);
            prop_assert!(m[i * n + i] > 0.0);
        }
    }

    #[test]
    fn closed_form_matches_solve(
        n in 1usize..30,
        pi in prop::collection::vec(0.0f64..=1.0, 30),
        b in prop::collection::vec(-5.0f64..5.0, 30),
        s in prop::collection::vec(0.1f64..3.0, 30),
    ) {
        let (pi, b, s) = (&pi[..n], &b[..n], &s[..n]);
        let gamma = HoldingMatrix::column_constant(pi).unwrap();
        let lu = game_coefficients_solve(&gamma, b, s).unwrap();
        let cf = game_coefficients_closed_form(pi, b, s).unwrap();
        prop_assert!(cf.relative_discrepancy(&lu) <= 1e-10);
    }

    #[test]
    fn coefficients_are_exchangeable(
        n in 2usize..10,
        raw in prop::collection::vec(0.0f64..=1.0, 100),
        b in prop::collection::vec(-5.0f64..5.0, 10),
        s in prop::collection::vec(0.1f64..3.0, 10),
        shift in 1usize..10,
    ) {
        let entries = raw[..n * n].to_vec();
        let gamma = HoldingMatrix::new(n, entries.clone()).unwrap();
        let base = game_coefficients_solve(&gamma, &b[..n], &s[..n]).unwrap();
        // relabel players by a cyclic shift
        let p: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let mut permuted = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                permuted[p[i] * n + p[j]] = entries[i * n + j];
            }
        }
        let mut bp = vec![0.0; n];
        let mut sp = vec![0.0; n];
        for i in 0..n {
            bp[p[i]] = b[i];
            sp[p[i]] = s[i];
        }
        let other = game_coefficients_solve(&HoldingMatrix::new(n, permuted).unwrap(), &bp, &sp).unwrap();
        for i in 0..n {
            prop_assert!((other.drift()[p[i]] - base.drift()[i]).abs() <= 1e-10);
            for j in 0..n {
                prop_assert!((other.diffusion(p[i], p[j]) - base.diffusion(i, j)).abs() <= 1e-10);
            }
        }
    }
}
