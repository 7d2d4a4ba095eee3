use serde::{Deserialize, Serialize};

use crate::equilibrium::optimal_holding;
use crate::error::{Error, Result};
use crate::models::CoefficientModel;
use crate::threshold::solve_c_uniform;

/// Dense `n x n` matrix of holding fractions `gamma[i][j]` (agent `i` holds `j`).
#[derive(Clone, Debug, PartialEq)]
pub struct HoldingMatrix {
    n: usize,
    entries: Vec<f64>,
}

fn check_fraction(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("holding fraction {v} outside [0, 1]")));
    }
    Ok(())
}

impl HoldingMatrix {
    /// Row-major entries.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::invalid(format!("need {n}x{n} entries, got {}", entries.len())));
        }
        for &v in &entries {
            check_fraction(v)?;
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n] }
    }

    pub fn ones(n: usize) -> Self {
        Self { n, entries: vec![1.0; n * n] }
    }

    /// Every row equal to `pi`: the holding decision depends on the target only.
    pub fn column_constant(pi: &[f64]) -> Result<Self> {
        let n = pi.len();
        let mut entries = Vec::with_capacity(n * n);
        for _ in 0..n {
            entries.extend_from_slice(pi);
        }
        Self::new(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `Gamma^{-i}(beta)`: row `i` replaced by `beta`.
    pub fn with_row(&self, i: usize, beta: &[f64]) -> Result<Self> {
        if i >= self.n || beta.len() != self.n {
            return Err(Error::invalid("deviation row has the wrong shape"));
        }
        for &v in beta {
            check_fraction(v)?;
        }
        let mut out = self.clone();
        out.entries[i * self.n..(i + 1) * self.n].copy_from_slice(beta);
        Ok(out)
    }

    /// The common row when all rows agree.
    pub fn column_profile(&self) -> Option<&[f64]> {
        let first = self.row(0);
        (1..self.n).all(|i| self.row(i) == first).then_some(first)
    }
}

/// Threshold and per-target holding indicators induced by the mean-field
/// strategy at the empirical measure of `states`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldingProfile {
    pub c: f64,
    pub held: Vec<bool>,
}

impl HoldingProfile {
    pub fn as_fractions(&self) -> Vec<f64> {
        self.held.iter().map(|&h| if h { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_matrix(&self) -> HoldingMatrix {
        HoldingMatrix::column_constant(&self.as_fractions()).expect("indicators lie in [0, 1]")
    }

    pub fn held_fraction(&self) -> f64 {
        self.held.iter().filter(|h| **h).count() as f64 / self.held.len() as f64
    }
}

pub(crate) fn profile_from_drifts(b: &[f64], tol: f64) -> Result<HoldingProfile> {
    let c = solve_c_uniform(b, tol)?.c;
    Ok(HoldingProfile { c, held: b.iter().map(|&bj| optimal_holding(bj, c)).collect() })
}

pub fn mfg_induced_profile(
    model: &CoefficientModel,
    t: f64,
    states: &[f64],
    tol: f64,
) -> Result<HoldingProfile> {
    if states.is_empty() {
        return Err(Error::invalid("no player states"));
    }
    if let Some(x) = states.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite player state {x}")));
    }
    let b: Vec<f64> = states.iter().map(|&x| model.drift_unchecked(t, x)).collect();
    profile_from_drifts(&b, tol)
}

/// `Pi^N` at `states`: `pi[i][j] = 1{b(t, x^j, m^N) + c(t, m^N) >= 0}`.
pub fn mfg_induced_strategy(
    model: &CoefficientModel,
    t: f64,
    states: &[f64],
    tol: f64,
) -> Result<HoldingMatrix> {
    Ok(mfg_induced_profile(model, t, states, tol)?.to_matrix())
}

/// Unilateral deviations of one player from the induced strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeviationStrategy {
    /// Keeps the equilibrium row.
    Null,
    NeverHold,
    AlwaysHold,
    /// Holds exactly the competitors the equilibrium rejects.
    AntiBangBang,
    /// Holding fraction as a clamped piecewise-linear function of the
    /// target's state.
    Custom { name: String, grid: Vec<f64>, values: Vec<f64> },
}

impl DeviationStrategy {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "null" => Ok(Self::Null),
            "never_hold" => Ok(Self::NeverHold),
            "always_hold" => Ok(Self::AlwaysHold),
            "anti_bang_bang" => Ok(Self::AntiBangBang),
            other => Err(Error::invalid(format!("unknown deviation `{other}`"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Null => "null".into(),
            Self::NeverHold => "never_hold".into(),
            Self::AlwaysHold => "always_hold".into(),
            Self::AntiBangBang => "anti_bang_bang".into(),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Custom { grid, values, .. } = self {
            if grid.is_empty() || grid.len() != values.len() {
                return Err(Error::invalid("custom deviation needs matching grid and values"));
            }
            if grid.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid("custom deviation grid must be strictly increasing"));
            }
            for &v in values {
                check_fraction(v)?;
            }
        }
        Ok(())
    }

    /// Deviating row `beta` given the equilibrium row `pi` and the targets' states.
    pub fn beta(&self, pi: &[f64], states: &[f64]) -> Vec<f64> {
        match self {
            Self::Null => pi.to_vec(),
            Self::NeverHold => vec![0.0; pi.len()],
            Self::AlwaysHold => vec![1.0; pi.len()],
            Self::AntiBangBang => pi.iter().map(|p| 1.0 - p).collect(),
            Self::Custom { grid, values, .. } => states
                .iter()
                .map(|&x| {
                    let last = grid.len() - 1;
                    if x <= grid[0] {
                        values[0]
                    } else if x >= grid[last] {
                        values[last]
                    } else {
                        let k = grid.partition_point(|g| *g <= x);
                        let w = (x - grid[k - 1]) / (grid[k] - grid[k - 1]);
                        values[k - 1] + w * (values[k] - values[k - 1])
                    }
                })
                .collect(),
        }
    }
}
