//! Atomic probability measures on the real line and the Gaussian helpers
//! used by the solvers and simulators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{compensated_sum, pairwise_sum_by};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Weighted atomic probability measure. Duplicate atoms are allowed and kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure", into = "RawMeasure")]
pub struct Measure1D {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMeasure {
    atoms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl TryFrom<RawMeasure> for Measure1D {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        empirical_from_samples(&raw.atoms, raw.weights.as_deref())
    }
}

impl From<Measure1D> for RawMeasure {
    fn from(m: Measure1D) -> Self {
        RawMeasure {
            atoms: m.atoms,
            weights: Some(m.weights),
        }
    }
}

impl Measure1D {
    /// Builds a measure from already-normalized weights, checking every invariant.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("measure needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(x) = atoms.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("non-finite atom {x}")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("invalid weight {w}")));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { atoms, weights })
    }

    /// Uniform empirical measure of the given states.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        empirical_from_samples(values, None)
    }

    pub fn dirac(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Integral of `f` against the measure, pairwise-summed in atom order.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        pairwise_sum_by(self.len(), &|j| self.weights[j] * f(self.atoms[j]))
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.integrate(|x| (x - m) * (x - m))
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|x| x + delta).collect(),
            weights: self.weights.clone(),
        }
    }

    /// (atom, weight) pairs sorted by atom; ties keep their original order.
    pub fn sorted_pairs(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    }
}

/// Normalizes `values` (with optional non-negative weights) into a measure.
pub fn empirical_from_samples(values: &[f64], weights: Option<&[f64]>) -> Result<Measure1D> {
    if values.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if let Some(x) = values.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample {x}")));
    }
    let weights = match weights {
        None => vec![1.0 / values.len() as f64; values.len()],
        Some(w) => {
            if w.len() != values.len() {
                return Err(Error::invalid(format!(
                    "{} samples but {} weights",
                    values.len(),
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(Error::invalid(format!("negative or non-finite weight {bad}")));
            }
            let total = compensated_sum(w.iter().copied());
            if total <= 0.0 {
                return Err(Error::invalid("weights are all zero"));
            }
            w.iter().map(|x| x / total).collect()
        }
    };
    Measure1D::new(values.to_vec(), weights)
}

/// Quadratic Wasserstein distance between two atomic measures, computed
/// exactly by the monotone (quantile) coupling on the merged partition of
/// cumulative weights.
pub fn wasserstein2(m1: &Measure1D, m2: &Measure1D) -> f64 {
    let a = m1.sorted_pairs();
    let b = m2.sorted_pairs();
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = crate::numerics::CompensatedSum::new();
    while i < a.len() && j < b.len() {
        let seg = ra.min(rb);
        let d = a[i].0 - b[j].0;
        acc.add(seg * d * d);
        ra -= seg;
        rb -= seg;
        if ra <= 0.0 {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= 0.0 {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    acc.value().max(0.0).sqrt()
}

/// Silverman's rule of thumb `1.06 · sd · n^(-1/5)`; falls back to unit
/// scale when the measure is degenerate.
pub fn silverman_bandwidth(m: &Measure1D) -> f64 {
    let sd = m.variance().sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    1.06 * scale * (m.len() as f64).powf(-0.2)
}

/// Gaussian-kernel density estimate evaluated on `grid`.
pub fn kde_density(m: &Measure1D, bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("KDE grid must be sorted"));
    }
    let inv_h = 1.0 / bandwidth;
    Ok(grid
        .iter()
        .map(|&x| {
            m.integrate(|a| {
                let z = (x - a) * inv_h;
                INV_SQRT_2PI * (-0.5 * z * z).exp()
            }) * inv_h
        })
        .collect())
}

/// Normal law `N(mean, variance)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!(
                "gaussian needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Density and distribution function of `spec` at `x`.
pub fn gaussian_pdf_cdf(x: f64, spec: &GaussianSpec) -> (f64, f64) {
    let sd = spec.std_dev();
    let z = (x - spec.mean) / sd;
    (std_normal_pdf(z) / sd, std_normal_cdf(z))
}

/// `E[(a + s Z)^+]` for standard normal `Z` and `s >= 0`.
pub fn gaussian_positive_part_mean(a: f64, s: f64) -> f64 {
    if s == 0.0 {
        return a.max(0.0);
    }
    let r = a / s;
    a * std_normal_cdf(r) + s * std_normal_pdf(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_default_weights() {
        let m = empirical_from_samples(&[1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(m.atoms(), &[1.0, 2.0, 3.0]);
        for w in m.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-16);
        }
    }

    #[test]
    fn single_weight_normalizes() {
        let m = empirical_from_samples(&[5.0], Some(&[7.0])).unwrap();
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn duplicates_are_kept() {
        let m = empirical_from_samples(&[0.0, 0.0], None).unwrap();
        assert_eq!(m.atoms(), &[0.0, 0.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn construction_errors() {
        assert!(empirical_from_samples(&[], None).is_err());
        assert!(empirical_from_samples(&[1.0, 2.0], Some(&[1.0, -1.0])).is_err());
        assert!(empirical_from_samples(&[f64::NAN], None).is_err());
        assert!(empirical_from_samples(&[1.0], Some(&[0.0])).is_err());
        assert!(Measure1D::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn w2_point_masses_and_identity() {
        let a = Measure1D::dirac(1.5).unwrap();
        let b = Measure1D::dirac(-2.0).unwrap();
        assert_eq!(wasserstein2(&a, &b), 3.5);
        let m = empirical_from_samples(&[0.3, -1.0, 2.0], Some(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(wasserstein2(&m, &m), 0.0);
    }

    #[test]
    fn w2_uneven_partition() {
        // {0,1} uniform vs {0,2} uniform
        let a = Measure1D::uniform(&[0.0, 1.0]).unwrap();
        let b = Measure1D::uniform(&[0.0, 2.0]).unwrap();
        assert!((wasserstein2(&a, &b) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kde_single_kernel() {
        let m = Measure1D::dirac(0.0).unwrap();
        let d = kde_density(&m, 1.0, &[0.0]).unwrap();
        assert!((d[0] - 0.398_942_3).abs() < 1e-7);
        assert!(kde_density(&m, 0.0, &[0.0]).is_err());
        assert!(kde_density(&m, 1.0, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn kde_two_atoms_matches_mixture_sum() {
        let m = Measure1D::uniform(&[-1.0, 1.0]).unwrap();
        let d = kde_density(&m, 0.5, &[0.0]).unwrap();
        // each kernel sits 2 bandwidths away from the origin
        let expected = 2.0 * 0.5 * (-2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt() / 0.5;
        assert!((d[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn gaussian_reference_values() {
        let std = GaussianSpec::new(0.0, 1.0).unwrap();
        let (pdf, cdf) = gaussian_pdf_cdf(0.0, &std);
        assert!((pdf - 0.398_942_3).abs() < 1e-7);
        assert_eq!(cdf, 0.5);
        let shifted = GaussianSpec::new(3.0, 4.0).unwrap();
        assert_eq!(gaussian_pdf_cdf(3.0, &shifted).1, 0.5);
        assert!(GaussianSpec::new(0.0, 0.0).is_err());
    }

    #[test]
    fn positive_part_mean_limits() {
        assert_eq!(gaussian_positive_part_mean(2.0, 0.0), 2.0);
        assert_eq!(gaussian_positive_part_mean(-2.0, 0.0), 0.0);
        // E[Z^+] = 1/sqrt(2 pi)
        assert!((gaussian_positive_part_mean(0.0, 1.0) - INV_SQRT_2PI).abs() < 1e-16);
    }
}
