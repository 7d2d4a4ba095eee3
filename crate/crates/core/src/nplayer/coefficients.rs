//! Drift and diffusion of the N-agent cross-holding system.
//!
//! Writing the dynamics as `M(Gamma) dX = b dt + diag(sigma) dW` with
//! `M_ii = 1 + (1/N) Σ_j gamma[j][i] - (1/N) gamma[i][i]` and
//! `M_ik = -(1/N) gamma[i][k]`, the coefficients are `B = M^{-1} b` and
//! `Sigma = M^{-1} diag(sigma)`. The dense LU solve is the reference; the
//! closed forms below apply `M^{-1}` in `O(N)` when every row of `Gamma`
//! (except possibly a deviating one) equals a common profile `pi`.
//!
//! For such profiles `M = diag(1 + pi) - (1/N) 1 pi^T`, whence
//! `(M^{-1})_{ij} = (1{i=j} + A_j / N) / (1 + pi_i)` with
//! `A_j = (pi_j / (1 + pi_j)) / (1 - (1/N) Σ_k pi_k / (1 + pi_k))`.
//! The volatility entering `Sigma[i][j]` is therefore the one of the
//! column index `j`.

use serde::Serialize;

use super::holding::HoldingMatrix;
use crate::error::{Error, Result};
use crate::numerics::{pairwise_sum_by, DenseLu};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMethod {
    LinearSolve,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GameCoefficients {
    n: usize,
    drift: Vec<f64>,
    /// Row-major `n x n`.
    diffusion: Vec<f64>,
    pub method: CoefficientMethod,
}

impl GameCoefficients {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn diffusion(&self, i: usize, j: usize) -> f64 {
        self.diffusion[i * self.n + j]
    }

    pub fn diffusion_matrix(&self) -> &[f64] {
        &self.diffusion
    }

    /// `max(‖ΔB‖∞ / ‖B‖∞, ‖ΔΣ‖∞ / ‖Σ‖∞)` with max-norms over entries.
    pub fn relative_discrepancy(&self, reference: &GameCoefficients) -> f64 {
        fn rel(a: &[f64], b: &[f64]) -> f64 {
            let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            if scale == 0.0 {
                diff
            } else {
                diff / scale
            }
        }
        rel(&self.drift, &reference.drift).max(rel(&self.diffusion, &reference.diffusion))
    }
}

fn check_vectors(n: usize, b: &[f64], sigma: &[f64]) -> Result<()> {
    if b.len() != n || sigma.len() != n {
        return Err(Error::invalid(format!(
            "coefficient vectors must have length {n} (got {} and {})",
            b.len(),
            sigma.len()
        )));
    }
    if b.iter().chain(sigma).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite provisions coefficient"));
    }
    Ok(())
}

/// `M(Gamma)` in row-major order.
pub fn assemble_m(gamma: &HoldingMatrix) -> Vec<f64> {
    let n = gamma.n();
    let inv_n = 1.0 / n as f64;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let col_sum = pairwise_sum_by(n, &|j| gamma.get(j, i));
        for k in 0..n {
            m[i * n + k] = -inv_n * gamma.get(i, k);
        }
        m[i * n + i] = 1.0 + inv_n * col_sum - inv_n * gamma.get(i, i);
    }
    m
}

/// Reference construction by LU factorization of `M(Gamma)`.
pub fn game_coefficients_solve(gamma: &HoldingMatrix, b: &[f64], sigma: &[f64]) -> Result<GameCoefficients> {
    let n = gamma.n();
    check_vectors(n, b, sigma)?;
    let lu = DenseLu::factor(n, assemble_m(gamma))?;
    let drift = lu.solve(b);
    let mut diffusion = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for q in 0..n {
        e[q] = sigma[q];
        let col = lu.solve(&e);
        e[q] = 0.0;
        for (i, v) in col.into_iter().enumerate() {
            diffusion[i * n + q] = v;
        }
    }
    Ok(GameCoefficients { n, drift, diffusion, method: CoefficientMethod::LinearSolve })
}

/// Max absolute residual of `B^i = (1/N) Σ_j γ^{ij} B^j - (1/N) Σ_j γ^{ji} B^i + b^i`.
pub fn drift_equation_residual(gamma: &HoldingMatrix, b: &[f64], coeffs: &GameCoefficients) -> f64 {
    let n = gamma.n();
    let inv_n = 1.0 / n as f64;
    let big_b = coeffs.drift();
    (0..n)
        .map(|i| {
            let inflow = pairwise_sum_by(n, &|j| gamma.get(i, j) * big_b[j]);
            let outflow = pairwise_sum_by(n, &|j| gamma.get(j, i));
            (big_b[i] - (inv_n * inflow - inv_n * outflow * big_b[i] + b[i])).abs()
        })
        .fold(0.0, f64::max)
}

/// Max absolute residual of the diffusion equations, entry by entry.
pub fn vol_equation_residual(gamma: &HoldingMatrix, sigma: &[f64], coeffs: &GameCoefficients) -> f64 {
    let n = gamma.n();
    let inv_n = 1.0 / n as f64;
    let mut worst = 0.0f64;
    for i in 0..n {
        let outflow = pairwise_sum_by(n, &|j| gamma.get(j, i));
        for q in 0..n {
            let inflow = pairwise_sum_by(n, &|j| gamma.get(i, j) * coeffs.diffusion(j, q));
            let own = coeffs.diffusion(i, q);
            let source = if q == i { sigma[i] } else { 0.0 };
            worst = worst.max((own - (inv_n * inflow - inv_n * outflow * own + source)).abs());
        }
    }
    worst
}

/// Application of `M^{-1}` for a column-constant profile.
#[derive(Clone, Debug)]
pub struct ColumnKernel {
    pi: Vec<f64>,
    a: Vec<f64>,
    inv_n: f64,
}

impl ColumnKernel {
    pub fn new(pi: &[f64]) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::invalid("empty holding profile"));
        }
        if let Some(p) = pi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("holding fraction {p} outside [0, 1]")));
        }
        let n = pi.len();
        let inv_n = 1.0 / n as f64;
        let ratio: Vec<f64> = pi.iter().map(|p| p / (1.0 + p)).collect();
        // each ratio is at most 1/2, so the denominator is at least 1/2
        let denom = 1.0 - inv_n * pairwise_sum_by(n, &|k| ratio[k]);
        let a = ratio.iter().map(|r| r / denom).collect();
        Ok(Self { pi: pi.to_vec(), a, inv_n })
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    /// The `A_j` weights.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let shared = self.inv_n * pairwise_sum_by(v.len(), &|j| self.a[j] * v[j]);
        v.iter().zip(&self.pi).map(|(vi, p)| (vi + shared) / (1.0 + p)).collect()
    }

    pub fn inverse_entry(&self, i: usize, j: usize) -> f64 {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta + self.inv_n * self.a[j]) / (1.0 + self.pi[i])
    }
}

/// Application of `M(Gamma^{-i}(beta))^{-1}` when the undeviated rows share
/// the profile `pi`. With `r_j = 1 + (N-1)/N pi_j` and
/// `a_j = (pi_j + beta_j pi_i / (N r_i)) / (r_j + beta_j / N)` for `j != i`,
/// the target rows are solved first through their common aggregate, then
/// the deviating row.
#[derive(Clone, Debug)]
pub struct DeviatedKernel {
    pi: Vec<f64>,
    beta: Vec<f64>,
    player: usize,
    r: Vec<f64>,
    a: Vec<f64>,
    denom: f64,
    inv_n: f64,
}

impl DeviatedKernel {
    pub fn new(pi: &[f64], player: usize, beta: &[f64]) -> Result<Self> {
        let n = pi.len();
        if player >= n || beta.len() != n {
            return Err(Error::invalid("deviation has the wrong shape"));
        }
        for v in pi.iter().chain(beta) {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::invalid(format!("holding fraction {v} outside [0, 1]")));
            }
        }
        let nf = n as f64;
        let inv_n = 1.0 / nf;
        let r: Vec<f64> = pi.iter().map(|p| 1.0 + (nf - 1.0) * inv_n * p).collect();
        let own = pi[player] / (nf * r[player]);
        let a: Vec<f64> = (0..n)
            .map(|j| if j == player { 0.0 } else { (pi[j] + beta[j] * own) / (r[j] + beta[j] * inv_n) })
            .collect();
        let denom = 1.0 - inv_n * pairwise_sum_by(n, &|j| a[j]);
        if !(denom > 0.0) {
            return Err(Error::Singular(format!("deviated aggregate denominator {denom}")));
        }
        Ok(Self { pi: pi.to_vec(), beta: beta.to_vec(), player, r, a, denom, inv_n })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (i, n) = (self.player, v.len());
        let extra = self.inv_n * self.pi[i] / self.r[i] * v[i];
        let aggregate =
            self.inv_n * pairwise_sum_by(n, &|j| if j == i { 0.0 } else { self.a[j] * (v[j] + extra) }) / self.denom;
        let mut u: Vec<f64> = (0..n)
            .map(|k| {
                if k == i {
                    0.0
                } else {
                    (aggregate + extra + v[k]) / (self.r[k] + self.beta[k] * self.inv_n)
                }
            })
            .collect();
        let held = pairwise_sum_by(n, &|j| if j == i { 0.0 } else { self.beta[j] * u[j] });
        u[i] = (self.inv_n * held + v[i]) / self.r[i];
        u
    }

    /// `(M^{-1})_{kk}` via one application to a unit vector.
    pub fn inverse_diagonal(&self, k: usize) -> f64 {
        let mut e = vec![0.0; self.pi.len()];
        e[k] = 1.0;
        self.apply(&e)[k]
    }
}

fn coefficients_from_apply(
    n: usize,
    b: &[f64],
    sigma: &[f64],
    apply: impl Fn(&[f64]) -> Vec<f64>,
) -> GameCoefficients {
    let drift = apply(b);
    let mut diffusion = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for q in 0..n {
        e[q] = sigma[q];
        for (i, v) in apply(&e).into_iter().enumerate() {
            diffusion[i * n + q] = v;
        }
        e[q] = 0.0;
    }
    GameCoefficients { n, drift, diffusion, method: CoefficientMethod::ClosedForm }
}

fn closed_form_tolerance(b: &[f64], sigma: &[f64]) -> f64 {
    let scale = b.iter().chain(sigma).fold(1.0f64, |m, v| m.max(v.abs()));
    1e-10 * scale
}

/// Closed-form coefficients for the column-constant strategy `pi`. The
/// result is checked against the defining equations; a mismatch is a bug.
pub fn game_coefficients_closed_form(pi: &[f64], b: &[f64], sigma: &[f64]) -> Result<GameCoefficients> {
    let n = pi.len();
    check_vectors(n, b, sigma)?;
    let kernel = ColumnKernel::new(pi)?;
    let coeffs = coefficients_from_apply(n, b, sigma, |v| kernel.apply(v));
    let gamma = HoldingMatrix::column_constant(pi)?;
    let residual = drift_equation_residual(&gamma, b, &coeffs).max(vol_equation_residual(&gamma, sigma, &coeffs));
    if residual > closed_form_tolerance(b, sigma) {
        return Err(Error::CoefficientMismatch { residual });
    }
    Ok(coeffs)
}

/// Coefficients of the system where player `i` replaces its row by `beta`,
/// by LU solve. A `beta` equal to the current row returns the undeviated
/// coefficients.
pub fn deviated_coefficients(
    gamma: &HoldingMatrix,
    i: usize,
    beta: &[f64],
    b: &[f64],
    sigma: &[f64],
) -> Result<GameCoefficients> {
    if i >= gamma.n() {
        return Err(Error::invalid(format!("player {i} out of range")));
    }
    if beta == gamma.row(i) {
        return game_coefficients_solve(gamma, b, sigma);
    }
    game_coefficients_solve(&gamma.with_row(i, beta)?, b, sigma)
}

/// Closed-form counterpart of [`deviated_coefficients`] for column-constant
/// undeviated rows.
pub fn deviated_coefficients_closed_form(
    pi: &[f64],
    i: usize,
    beta: &[f64],
    b: &[f64],
    sigma: &[f64],
) -> Result<GameCoefficients> {
    let n = pi.len();
    check_vectors(n, b, sigma)?;
    let kernel = DeviatedKernel::new(pi, i, beta)?;
    let coeffs = coefficients_from_apply(n, b, sigma, |v| kernel.apply(v));
    let gamma = HoldingMatrix::column_constant(pi)?.with_row(i, beta)?;
    let residual = drift_equation_residual(&gamma, b, &coeffs).max(vol_equation_residual(&gamma, sigma, &coeffs));
    if residual > closed_form_tolerance(b, sigma) {
        return Err(Error::CoefficientMismatch { residual });
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_interaction_is_identity() {
        let gamma = HoldingMatrix::zeros(3);
        let c = game_coefficients_solve(&gamma, &[1.0, -2.0, 0.5], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c.drift(), &[1.0, -2.0, 0.5]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c.diffusion(i, j), if i == j { (i + 1) as f64 } else { 0.0 });
            }
        }
    }

    #[test]
    fn single_player_self_holding_cancels() {
        for g in [0.0, 0.3, 1.0] {
            let gamma = HoldingMatrix::new(1, vec![g]).unwrap();
            assert_eq!(assemble_m(&gamma), vec![1.0]);
            let c = game_coefficients_solve(&gamma, &[0.7], &[1.1]).unwrap();
            assert_eq!(c.drift(), &[0.7]);
        }
    }

    #[test]
    fn two_player_all_ones() {
        let gamma = HoldingMatrix::ones(2);
        assert_eq!(assemble_m(&gamma), vec![1.5, -0.5, -0.5, 1.5]);
        let c = game_coefficients_solve(&gamma, &[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!((c.drift()[0] - 0.5).abs() < 1e-15);
        assert!((c.drift()[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_weights() {
        let k = ColumnKernel::new(&[0.0; 4]).unwrap();
        assert!(k.a().iter().all(|a| *a == 0.0));
        let k = ColumnKernel::new(&[1.0; 4]).unwrap();
        assert!(k.a().iter().all(|a| *a == 1.0));
        let k = ColumnKernel::new(&[0.0, 1.0]).unwrap();
        assert_eq!(k.a()[0], 0.0);
        assert!((k.a()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_all_held_entries() {
        let n = 5;
        let sigma = [1.0, 2.0, 0.5, 1.5, 3.0];
        let b = [0.1, -0.2, 0.3, 0.0, 1.0];
        let c = game_coefficients_closed_form(&[1.0; 5], &b, &sigma).unwrap();
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { sigma[i] } else { 0.0 };
                let expected = (delta + sigma[j] / n as f64) / 2.0;
                assert!((c.diffusion(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn closed_form_matches_solve_two_players() {
        let pi = [0.0, 1.0];
        let (b, sigma) = ([0.4, -0.3], [1.0, 2.0]);
        let cf = game_coefficients_closed_form(&pi, &b, &sigma).unwrap();
        let lu = game_coefficients_solve(&HoldingMatrix::column_constant(&pi).unwrap(), &b, &sigma).unwrap();
        assert!(cf.relative_discrepancy(&lu) < 1e-14);
        assert_eq!(cf.method, CoefficientMethod::ClosedForm);
    }

    #[test]
    fn null_deviation_is_noop() {
        let gamma = HoldingMatrix::column_constant(&[1.0, 0.0, 1.0]).unwrap();
        let (b, sigma) = ([0.2, -1.0, 0.3], [1.0, 1.0, 1.0]);
        let base = game_coefficients_solve(&gamma, &b, &sigma).unwrap();
        let dev = deviated_coefficients(&gamma, 1, gamma.row(1), &b, &sigma).unwrap();
        assert_eq!(base, dev);
    }

    #[test]
    fn deviated_closed_form_without_interaction() {
        let pi = [0.0; 4];
        let beta = [0.3, 0.9, 0.0, 0.5];
        let (b, sigma) = ([1.0, -0.5, 2.0, 0.25], [1.0, 0.5, 2.0, 1.0]);
        let cf = deviated_coefficients_closed_form(&pi, 2, &beta, &b, &sigma).unwrap();
        let lu = deviated_coefficients(&HoldingMatrix::zeros(4), 2, &beta, &b, &sigma).unwrap();
        assert!(cf.relative_discrepancy(&lu) < 1e-14);
    }

    #[test]
    fn vector_shape_errors() {
        assert!(game_coefficients_solve(&HoldingMatrix::zeros(2), &[1.0], &[1.0, 1.0]).is_err());
        assert!(game_coefficients_closed_form(&[0.5, 2.0], &[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(deviated_coefficients(&HoldingMatrix::zeros(2), 5, &[0.0, 0.0], &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }
}
