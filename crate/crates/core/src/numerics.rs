//! Small numerical kernels shared across modules: deterministic summation
//! and a dense LU factorization with partial pivoting.

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (tree) summation. The split points depend only on the length,
/// so the result is reproducible regardless of how the inputs were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n`, without materializing the terms.
pub fn pairwise_sum_by(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, f)
}

/// Kahan–Babuška–Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Row-major dense LU factorization `P A = L U`.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::invalid(format!(
                "matrix storage has {} entries, expected {}",
                a.len(),
                n * n
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut piv, mut best) = (k, a[k * n + k].abs());
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let factor = a[r * n + k] / pivot;
                a[r * n + k] = factor;
                if factor != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= factor * a[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for r in 0..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in r + 1..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 55.0);
        assert_eq!(pairwise_sum_by(10, &|i| (i + 1) as f64), 55.0);
    }

    #[test]
    fn compensated_sum_recovers_cancelled_mass() {
        let s = compensated_sum([1.0, 1e100, 1.0, -1e100]);
        assert_eq!(s, 2.0);
    }

    #[test]
    fn lu_solves_pivoting_system() {
        // requires a row swap in the first column
        let lu = DenseLu::factor(2, vec![0.0, 1.0, 2.0, 1.0]).unwrap();
        let x = lu.solve(&[1.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lu_reports_singular() {
        assert!(matches!(
            DenseLu::factor(2, vec![1.0, 2.0, 2.0, 4.0]),
            Err(Error::Singular(_))
        ));
    }
}
