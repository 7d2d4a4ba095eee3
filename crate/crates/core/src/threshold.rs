//! The holding threshold `c(t, m)`: the unique non-negative root of
//! `F(c) = c - 1/2 ∫ (c + b)^+ dm`.
//!
//! `F` is piecewise linear for atomic measures with slopes in `[1/2, 1]`, so
//! the default solver locates the piece containing the root and solves it in
//! closed form. For Gaussian initial laws with Ornstein–Uhlenbeck drift the
//! integral is explicit and the root is found by safeguarded Newton.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{gaussian_positive_part_mean, std_normal_cdf, std_normal_pdf};
use crate::numerics::CompensatedSum;

pub const DEFAULT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    ExactPiecewise,
    Bisection,
    NewtonSafeguarded,
}

impl ThresholdMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdMethod::ExactPiecewise => "exact_piecewise",
            ThresholdMethod::Bisection => "bisection",
            ThresholdMethod::NewtonSafeguarded => "newton_safeguarded",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub c: f64,
    /// `c - 1/2 ∫ (c + b)^+ dm` at the returned `c`.
    pub residual: f64,
    pub iterations: usize,
    pub method: ThresholdMethod,
}

fn check_inputs(b: &[f64], w: &[f64], tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if b.is_empty() || b.len() != w.len() {
        return Err(Error::invalid(format!(
            "need matching non-empty drift and weight vectors ({} vs {})",
            b.len(),
            w.len()
        )));
    }
    if let Some(x) = b.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite drift value {x}")));
    }
    if let Some(x) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("invalid weight {x}")));
    }
    let mut total = CompensatedSum::new();
    w.iter().for_each(|x| total.add(*x));
    if (total.value() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("weights sum to {}, expected 1", total.value())));
    }
    Ok(())
}

/// `2 Σ w_j b_j^+`, an upper bound for the threshold.
pub fn c_upper_bound(b: &[f64], w: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (bj, wj) in b.iter().zip(w) {
        if *bj > 0.0 {
            acc.add(wj * bj);
        }
    }
    2.0 * acc.value()
}

/// `F(c) = c - 1/2 Σ w_j (c + b_j)^+`, compensated.
pub fn fixed_point_residual(b: &[f64], w: &[f64], c: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for (bj, wj) in b.iter().zip(w) {
        let s = c + bj;
        if s > 0.0 {
            acc.add(wj * s);
        }
    }
    c - 0.5 * acc.value()
}

fn exact_piecewise(b: &[f64], w: &[f64]) -> (f64, usize) {
    let mut order: Vec<usize> = (0..b.len()).collect();
    order.sort_by(|&i, &j| b[j].total_cmp(&b[i]));
    // on the k-th piece the active atoms are the k largest drifts and
    // F(c) = c - 1/2 (W_k c + S_k)
    let mut weight_sum = CompensatedSum::new();
    let mut drift_sum = CompensatedSum::new();
    let n = order.len();
    for k in 0..=n {
        if k > 0 {
            let j = order[k - 1];
            weight_sum.add(w[j]);
            drift_sum.add(w[j] * b[j]);
        }
        let left = if k == 0 { f64::NEG_INFINITY } else { -b[order[k - 1]] };
        let right = if k == n { f64::INFINITY } else { -b[order[k]] };
        if right < 0.0 {
            continue;
        }
        let (wk, sk) = (weight_sum.value(), drift_sum.value());
        let f_right = right - 0.5 * (wk * right + sk);
        if k == n || f_right >= 0.0 {
            let c = sk / (2.0 - wk);
            return (c.clamp(left.max(0.0), right), k + 1);
        }
    }
    unreachable!("F is increasing and unbounded, some piece holds the root")
}

/// Bisection on `[0, 2 Σ w b^+]`.
pub fn solve_c_bisection(b: &[f64], w: &[f64], tol: f64) -> Result<ThresholdResult> {
    check_inputs(b, w, tol)?;
    let upper = c_upper_bound(b, w);
    let (mut lo, mut hi) = (0.0f64, upper);
    let mut c = 0.0;
    let mut residual = fixed_point_residual(b, w, c);
    let mut iterations = 0;
    while residual.abs() > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        c = 0.5 * (lo + hi);
        residual = fixed_point_residual(b, w, c);
        if residual < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    if residual.abs() > tol {
        return Err(Error::Threshold(format!(
            "bisection stalled at c={c} with residual {residual:e}"
        )));
    }
    Ok(ThresholdResult { c, residual, iterations, method: ThresholdMethod::Bisection })
}

/// Threshold for the atomic measure `Σ w_j δ` with drift values `b_j`.
pub fn solve_c_empirical(b: &[f64], w: &[f64], tol: f64) -> Result<ThresholdResult> {
    check_inputs(b, w, tol)?;
    if c_upper_bound(b, w) == 0.0 {
        return Ok(ThresholdResult {
            c: 0.0,
            residual: 0.0,
            iterations: 0,
            method: ThresholdMethod::ExactPiecewise,
        });
    }
    let (c, pieces) = exact_piecewise(b, w);
    let residual = fixed_point_residual(b, w, c);
    if residual.abs() <= tol {
        return Ok(ThresholdResult {
            c,
            residual,
            iterations: pieces,
            method: ThresholdMethod::ExactPiecewise,
        });
    }
    solve_c_bisection(b, w, tol)
}

/// Uniform-weight convenience wrapper over [`solve_c_empirical`].
pub fn solve_c_uniform(b: &[f64], tol: f64) -> Result<ThresholdResult> {
    let w = vec![1.0 / b.len().max(1) as f64; b.len()];
    solve_c_empirical(b, &w, tol)
}

/// Parameters of the Gaussian / Ornstein–Uhlenbeck threshold equation.
#[derive(Clone, Copy, Debug)]
struct GaussianOu {
    theta: f64,
    mbar: f64,
    mean: f64,
    sd: f64,
}

impl GaussianOu {
    fn kink(&self, x: f64) -> f64 {
        // b(y) + x >= 0  <=>  y <= x / theta + mbar
        x / self.theta + self.mbar
    }

    fn h(&self, x: f64) -> f64 {
        let z = (self.kink(x) - self.mean) / self.sd;
        let pdf = std_normal_pdf(z) / self.sd;
        let cdf = std_normal_cdf(z);
        x - 0.5 * self.theta * self.sd * self.sd * pdf
            - 0.5 * (x - self.theta * (self.mean - self.mbar)) * cdf
    }

    fn h_prime(&self, x: f64) -> f64 {
        1.0 - 0.5 * std_normal_cdf((self.kink(x) - self.mean) / self.sd)
    }
}

/// `H(x)` for drift `theta (mbar - y)` integrated against `N(mu_mean, mu_var)`.
pub fn gaussian_ou_equation(theta: f64, mbar: f64, mu_mean: f64, mu_var: f64, x: f64) -> f64 {
    GaussianOu { theta, mbar, mean: mu_mean, sd: mu_var.sqrt() }.h(x)
}

/// Threshold for an OU drift against a Gaussian law, by Newton iteration on
/// `H` kept inside the bracket `[0, 2 E[b^+]]`.
pub fn solve_c_gaussian_ou(
    theta: f64,
    mbar: f64,
    mu_mean: f64,
    mu_var: f64,
    tol: f64,
) -> Result<ThresholdResult> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::invalid(format!("theta must be positive, got {theta}")));
    }
    if !(mu_var > 0.0) || !mu_var.is_finite() || !mu_mean.is_finite() || !mbar.is_finite() {
        return Err(Error::invalid("need finite mean/mbar and positive variance"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let eq = GaussianOu { theta, mbar, mean: mu_mean, sd: mu_var.sqrt() };
    let upper = 2.0 * gaussian_positive_part_mean(theta * (mbar - mu_mean), theta * eq.sd);
    let (mut lo, mut hi) = (0.0f64, upper);
    let h_lo = eq.h(lo);
    if h_lo.abs() <= tol {
        return Ok(ThresholdResult {
            c: lo,
            residual: h_lo,
            iterations: 0,
            method: ThresholdMethod::NewtonSafeguarded,
        });
    }
    if eq.h(hi) < -tol {
        return Err(Error::Threshold(format!(
            "no sign change of H on [0, {upper}]; H(upper) = {}",
            eq.h(hi)
        )));
    }
    let mut x = 0.5 * (lo + hi);
    for iteration in 1..=MAX_ITERATIONS {
        let h = eq.h(x);
        if h.abs() <= tol {
            return Ok(ThresholdResult {
                c: x,
                residual: h,
                iterations: iteration,
                method: ThresholdMethod::NewtonSafeguarded,
            });
        }
        if h < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - h / eq.h_prime(x);
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            let h = eq.h(x);
            if h.abs() <= tol.max(4.0 * f64::EPSILON * x.max(1.0)) {
                return Ok(ThresholdResult {
                    c: x,
                    residual: h,
                    iterations: iteration,
                    method: ThresholdMethod::NewtonSafeguarded,
                });
            }
            break;
        }
    }
    Err(Error::Threshold(format!("Newton iteration on H did not converge (last x = {x})")))
}
