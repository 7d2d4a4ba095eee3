use mutual_holding::measures::{
    gaussian_pdf_cdf, gaussian_positive_part_mean, kde_density, silverman_bandwidth, std_normal_cdf, GaussianSpec,
    Measure1D,
};
use mutual_holding::mfsim::{
    linspace, simulate_equilibrium_mckv, simulate_provisions, InitialLaw, SimConfig,
};
use mutual_holding::models::CoefficientModel;

fn sample_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn erf_series(x: f64) -> f64 {
    // Maclaurin series, fine for |x| < 3
    let mut term = x;
    let mut sum = x;
    for k in 1..200 {
        term *= -x * x / k as f64;
        sum += term / (2 * k + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn normal_cdf_against_series() {
    for z in [-2.5, -1.0, 0.0, 0.3, 1.96, 2.8] {
        let series = 0.5 * (1.0 + erf_series(z / std::f64::consts::SQRT_2));
        assert!((std_normal_cdf(z) - series).abs() < 1e-13, "z={z}");
    }
    assert!((std_normal_cdf(1.96) - 0.9750021).abs() < 5e-8);
}

#[test]
fn pdf_is_derivative_of_cdf() {
    let spec = GaussianSpec::new(0.7, 2.3).unwrap();
    let h = 1e-5;
    for x in [-3.0, -0.5, 0.7, 2.0, 4.5] {
        let (pdf, _) = gaussian_pdf_cdf(x, &spec);
        let fd = (gaussian_pdf_cdf(x + h, &spec).1 - gaussian_pdf_cdf(x - h, &spec).1) / (2.0 * h);
        assert!((pdf - fd).abs() < 1e-8, "x={x}");
    }
}

#[test]
fn positive_part_mean_by_quadrature() {
    for (a, s) in [(-1.0, 0.5), (0.0, 1.0), (0.8, 2.0)] {
        // Simpson on the smooth part z > -a / s
        let lo = -a / s;
        let grid = linspace(lo, 12.0, 20001);
        let dz = grid[1] - grid[0];
        let f = |z: f64| (a + s * z) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let q: f64 = grid
            .iter()
            .enumerate()
            .map(|(k, &z)| {
                let c = if k == 0 || k == grid.len() - 1 { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                c * f(z)
            })
            .sum::<f64>()
            * dz
            / 3.0;
        assert!((gaussian_positive_part_mean(a, s) - q).abs() < 1e-9);
    }
}

#[test]
fn kde_integrates_to_one() {
    let m = Measure1D::new(vec![-1.0, 0.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
    let h = silverman_bandwidth(&m);
    let grid = linspace(-15.0, 18.0, 6001);
    let f = kde_density(&m, h, &grid).unwrap();
    let dx = grid[1] - grid[0];
    let mass: f64 = f.iter().sum::<f64>() * dx;
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
}

fn point_start(x: f64) -> InitialLaw {
    InitialLaw::Atomic(Measure1D::dirac(x).unwrap())
}

#[test]
fn zero_drift_variances() {
    // b = 0 gives c = 0: every particle is held at the tie, so Sigma = sigma / 2
    let model = CoefficientModel::constant(0.0, 1.0).unwrap();
    let cfg = SimConfig::new(model, point_start(0.0), 20_000, 20, 2.0, 11);
    let (_, v_eq) = sample_var(simulate_equilibrium_mckv(&cfg).unwrap().terminal());
    let (_, v_pr) = sample_var(simulate_provisions(&cfg).unwrap().terminal());
    // relative SE of a sample variance is about sqrt(2 / n) = 1%
    assert!((v_eq - 0.5).abs() < 0.05, "{v_eq}");
    assert!((v_pr - 2.0).abs() < 0.2, "{v_pr}");
}

#[test]
fn negative_drift_matches_provisions_bitwise() {
    let model = CoefficientModel::constant(-0.4, 0.8).unwrap();
    let cfg = SimConfig::new(model, point_start(1.0), 500, 30, 1.5, 5);
    let eq = simulate_equilibrium_mckv(&cfg).unwrap();
    let pr = simulate_provisions(&cfg).unwrap();
    for k in 0..=cfg.n_steps {
        assert_eq!(eq.states_at(k), pr.states_at(k));
    }
    assert!(eq.thresholds.iter().all(|&c| c == 0.0));
}

#[test]
fn ou_means_follow_the_mean_ode() {
    // E[B] = E[b] by the threshold equation, so both means solve m' = theta (mbar - m)
    let (theta, mbar, x0, t) = (1.5, -0.5, 1.0, 1.0);
    let model = CoefficientModel::ou(theta, mbar, 1.0).unwrap();
    let cfg = SimConfig::new(model, point_start(x0), 20_000, 200, t, 21);
    let exact = mbar + (x0 - mbar) * (-theta * t).exp();
    for e in [simulate_equilibrium_mckv(&cfg).unwrap(), simulate_provisions(&cfg).unwrap()] {
        let (m, v) = sample_var(e.terminal());
        let se = (v / cfg.n_particles as f64).sqrt();
        // Euler bias is O(dt) and well below the tolerance
        assert!((m - exact).abs() < 4.0 * se + 5e-3, "{m} vs {exact}");
    }
}

#[test]
fn equilibrium_thresholds_solve_each_step() {
    use mutual_holding::threshold::{fixed_point_residual, DEFAULT_TOL};
    let model = CoefficientModel::ou(1.0, 0.3, 1.0).unwrap();
    let cfg = SimConfig::new(model, InitialLaw::ou_invariant(&CoefficientModel::ou(1.0, 0.3, 1.0).unwrap()).unwrap(), 1000, 5, 0.5, 8);
    let e = simulate_equilibrium_mckv(&cfg).unwrap();
    let w = vec![1.0 / 1000.0; 1000];
    for k in 0..cfg.n_steps {
        let b: Vec<f64> = e.states_at(k).iter().map(|x| 0.3 - x).collect();
        assert!(fixed_point_residual(&b, &w, e.thresholds[k]).abs() < 1e-12 + DEFAULT_TOL);
    }
}
