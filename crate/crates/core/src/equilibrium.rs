//! Equilibrium drift, volatility and holding indicator at a fixed `(t, m)`.
//!
//! Ties `b + c = 0` fall in the held region everywhere: holding 1, half
//! volatility, zero drift.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::Measure1D;
use crate::models::{eval_b, eval_sigma, CoefficientModel};
use crate::numerics::pairwise_sum_by;
use crate::threshold::solve_c_empirical;

/// `1/2 (b + c)^+ - (b + c)^-`.
#[inline]
pub fn equilibrium_drift(b: f64, c: f64) -> f64 {
    let s = b + c;
    if s >= 0.0 {
        0.5 * s
    } else {
        s
    }
}

/// `sigma / 2` on the held region `b + c >= 0`, `sigma` elsewhere.
#[inline]
pub fn equilibrium_vol(b: f64, c: f64, sigma: f64) -> f64 {
    if b + c >= 0.0 {
        0.5 * sigma
    } else {
        sigma
    }
}

/// Optimal bang-bang holding of a competitor whose provisions drift is `b`.
#[inline]
pub fn optimal_holding(b: f64, c: f64) -> bool {
    b + c >= 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumFields {
    pub c: f64,
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
    pub b_vals: Vec<f64>,
    pub sigma_vals: Vec<f64>,
    pub drift: Vec<f64>,
    pub vol: Vec<f64>,
    pub holding: Vec<bool>,
}

impl EquilibriumFields {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Maps precomputed provisions coefficients on the atoms of `m` to the
/// equilibrium fields.
pub fn fields_from_values(
    m: &Measure1D,
    b_vals: Vec<f64>,
    sigma_vals: Vec<f64>,
    tol: f64,
) -> Result<EquilibriumFields> {
    if b_vals.len() != m.len() || sigma_vals.len() != m.len() {
        return Err(Error::invalid("coefficient vectors must match the measure's atoms"));
    }
    let c = solve_c_empirical(&b_vals, m.weights(), tol)?.c;
    let drift = b_vals.iter().map(|&b| equilibrium_drift(b, c)).collect();
    let vol = b_vals
        .iter()
        .zip(&sigma_vals)
        .map(|(&b, &s)| equilibrium_vol(b, c, s))
        .collect();
    let holding = b_vals.iter().map(|&b| optimal_holding(b, c)).collect();
    Ok(EquilibriumFields {
        c,
        atoms: m.atoms().to_vec(),
        weights: m.weights().to_vec(),
        b_vals,
        sigma_vals,
        drift,
        vol,
        holding,
    })
}

pub fn compute_fields(
    model: &CoefficientModel,
    t: f64,
    m: &Measure1D,
    tol: f64,
) -> Result<EquilibriumFields> {
    let b_vals = m
        .atoms()
        .iter()
        .map(|&x| eval_b(model, t, x, m))
        .collect::<Result<Vec<_>>>()?;
    let sigma_vals = m
        .atoms()
        .iter()
        .map(|&x| eval_sigma(model, t, x, m))
        .collect::<Result<Vec<_>>>()?;
    fields_from_values(m, b_vals, sigma_vals, tol)
}

/// Residuals of the two identities an equilibrium must satisfy:
/// `r1 = |Σ w B^+ - c|` and
/// `r2 = max_j |B_j (1 + 1{B_j >= 0}) - (b_j + Σ w B^+)|`.
pub fn consistency_residuals(fields: &EquilibriumFields, weights: &[f64]) -> (f64, f64) {
    let held_mass = pairwise_sum_by(fields.len(), &|j| weights[j] * fields.drift[j].max(0.0));
    let r1 = (held_mass - fields.c).abs();
    let r2 = fields
        .drift
        .iter()
        .zip(&fields.b_vals)
        .zip(&fields.holding)
        .map(|((&big_b, &b), &held)| {
            let factor = if held { 2.0 } else { 1.0 };
            (big_b * factor - (b + held_mass)).abs()
        })
        .fold(0.0, f64::max);
    (r1, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::threshold::DEFAULT_TOL;

    #[test]
    fn drift_branches() {
        assert_eq!(equilibrium_drift(1.5, 0.5), 1.0);
        assert_eq!(equilibrium_drift(-3.5, 0.5), -3.0);
        assert_eq!(equilibrium_drift(-0.5, 0.5), 0.0);
    }

    #[test]
    fn vol_branches() {
        assert_eq!(equilibrium_vol(0.5, 0.5, 2.0), 1.0);
        assert_eq!(equilibrium_vol(-1.5, 0.5, 2.0), 2.0);
        assert_eq!(equilibrium_vol(-0.5, 0.5, 2.0), 1.0);
    }

    #[test]
    fn holding_branches() {
        let c = 0.8;
        assert!(optimal_holding(-c / 2.0, c));
        assert!(!optimal_holding(-2.0 * c - 1.0, c));
        assert!(optimal_holding(-c, c));
    }

    #[test]
    fn single_atom_at_mean_is_held() {
        let model = CoefficientModel::ou(1.0, 0.4, 2.0).unwrap();
        let m = Measure1D::dirac(0.4).unwrap();
        let f = compute_fields(&model, 0.0, &m, DEFAULT_TOL).unwrap();
        assert_eq!(f.c, 0.0);
        assert_eq!(f.drift, vec![0.0]);
        assert_eq!(f.vol, vec![1.0]);
        assert_eq!(f.holding, vec![true]);
    }

    #[test]
    fn two_atom_composition() {
        // OU with theta = 1, mbar = 0 at atoms {1, -1} gives b = {-1, 1}
        let model = CoefficientModel::ou(1.0, 0.0, 1.0).unwrap();
        let m = Measure1D::uniform(&[1.0, -1.0]).unwrap();
        let f = compute_fields(&model, 0.0, &m, DEFAULT_TOL).unwrap();
        assert!((f.c - 1.0 / 3.0).abs() < 1e-15);
        assert!((f.drift[0] + 2.0 / 3.0).abs() < 1e-15);
        assert!((f.drift[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.holding, vec![false, true]);
        let (r1, r2) = consistency_residuals(&f, m.weights());
        assert!(r1 < 1e-15 && r2 < 1e-15);
    }

    #[test]
    fn negative_drift_fields() {
        let model = CoefficientModel::constant(-0.7, 1.3).unwrap();
        let m = Measure1D::uniform(&[0.0, 1.0, 2.0]).unwrap();
        let f = compute_fields(&model, 0.0, &m, DEFAULT_TOL).unwrap();
        assert_eq!(f.c, 0.0);
        assert_eq!(f.drift, f.b_vals);
        assert_eq!(f.vol, f.sigma_vals);
        assert!(f.holding.iter().all(|h| !h));
        assert_eq!(consistency_residuals(&f, m.weights()).0, 0.0);
    }
}
