//! Provisions coefficients `b(t, x, m)` and `sigma(t, x, m)`.
//!
//! The shipped variants ignore the measure argument; it stays in the
//! signatures so measure-coupled variants can be added without touching the
//! solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Measure1D;

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-9;

fn default_sigma_floor() -> f64 {
    DEFAULT_SIGMA_FLOOR
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelVariant {
    /// Ornstein–Uhlenbeck provisions: `b = theta (mbar - x)`, `sigma = sigbar`.
    Ou { theta: f64, mbar: f64, sigbar: f64 },
    /// Constant drift and volatility.
    ConstantSign { b0: f64, sig0: f64 },
    /// Piecewise-linear tables, clamped outside the grid. The table axis is
    /// the state `x`, or the time `t` when `time_dependent` is set.
    Tabulated {
        grid: Vec<f64>,
        b_values: Vec<f64>,
        sigma_values: Vec<f64>,
        #[serde(default)]
        time_dependent: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct CoefficientModel {
    variant: ModelVariant,
    sigma_floor: f64,
    drift_bound: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    #[serde(flatten)]
    variant: ModelVariant,
    #[serde(default = "default_sigma_floor")]
    sigma_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drift_bound: Option<f64>,
}

impl TryFrom<RawModel> for CoefficientModel {
    type Error = Error;
    fn try_from(raw: RawModel) -> Result<Self> {
        let mut model = CoefficientModel::new(raw.variant, raw.sigma_floor)?;
        if let Some(k) = raw.drift_bound {
            model = model.with_drift_bound(k)?;
        }
        Ok(model)
    }
}

impl From<CoefficientModel> for RawModel {
    fn from(m: CoefficientModel) -> Self {
        RawModel {
            variant: m.variant,
            sigma_floor: m.sigma_floor,
            drift_bound: m.drift_bound,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSign {
    NegativeEverywhere,
    NonNegativeEverywhere,
    Mixed,
}

impl DriftSign {
    pub fn describe(self) -> &'static str {
        match self {
            DriftSign::NegativeEverywhere => "drift negative everywhere",
            DriftSign::NonNegativeEverywhere => "drift non-negative everywhere",
            DriftSign::Mixed => "drift sign varies",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub sigma_min: f64,
    pub drift_sign: DriftSign,
    /// `max |b(x)| / (1 + x^2)` over the grid.
    pub drift_growth: f64,
    /// `max sigma(x) / (1 + x^2)` over the grid.
    pub sigma_growth: f64,
    pub bounded: bool,
}

impl CoefficientModel {
    pub fn new(variant: ModelVariant, sigma_floor: f64) -> Result<Self> {
        if !(sigma_floor > 0.0) || !sigma_floor.is_finite() {
            return Err(Error::invalid(format!("sigma_floor must be positive, got {sigma_floor}")));
        }
        match &variant {
            ModelVariant::Ou { theta, mbar, sigbar } => {
                if !(*theta > 0.0) || !theta.is_finite() {
                    return Err(Error::invalid(format!("theta must be positive, got {theta}")));
                }
                if !mbar.is_finite() {
                    return Err(Error::invalid("mbar must be finite"));
                }
                if !(*sigbar > 0.0) || !sigbar.is_finite() {
                    return Err(Error::invalid(format!("sigbar must be positive, got {sigbar}")));
                }
            }
            ModelVariant::ConstantSign { b0, sig0 } => {
                if !b0.is_finite() {
                    return Err(Error::invalid("b0 must be finite"));
                }
                if !(*sig0 > 0.0) || !sig0.is_finite() {
                    return Err(Error::invalid(format!("sig0 must be positive, got {sig0}")));
                }
            }
            ModelVariant::Tabulated { grid, b_values, sigma_values, .. } => {
                if grid.is_empty() {
                    return Err(Error::invalid("tabulated model needs a non-empty grid"));
                }
                if grid.len() != b_values.len() || grid.len() != sigma_values.len() {
                    return Err(Error::invalid("tabulated grid and value lengths differ"));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::invalid("tabulated grid must be strictly increasing"));
                }
                let all = grid.iter().chain(b_values).chain(sigma_values);
                if all.clone().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("tabulated model has non-finite entries"));
                }
                // sigma entries below the floor are reported by validate_assumptions
            }
        }
        Ok(Self { variant, sigma_floor, drift_bound: None })
    }

    pub fn ou(theta: f64, mbar: f64, sigbar: f64) -> Result<Self> {
        Self::new(ModelVariant::Ou { theta, mbar, sigbar }, DEFAULT_SIGMA_FLOOR)
    }

    pub fn constant(b0: f64, sig0: f64) -> Result<Self> {
        Self::new(ModelVariant::ConstantSign { b0, sig0 }, DEFAULT_SIGMA_FLOOR)
    }

    pub fn tabulated(grid: Vec<f64>, b_values: Vec<f64>, sigma_values: Vec<f64>) -> Result<Self> {
        Self::new(
            ModelVariant::Tabulated { grid, b_values, sigma_values, time_dependent: false },
            DEFAULT_SIGMA_FLOOR,
        )
    }

    /// Declares `|b| <= bound`; evaluations are clipped to it.
    pub fn with_drift_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::invalid(format!("drift_bound must be positive, got {bound}")));
        }
        self.drift_bound = Some(bound);
        Ok(self)
    }

    pub fn variant(&self) -> &ModelVariant {
        &self.variant
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn drift_bound(&self) -> Option<f64> {
        self.drift_bound
    }

    /// Whether both coefficients are bounded, either intrinsically or by a
    /// declared drift bound.
    pub fn is_bounded(&self) -> bool {
        match self.variant {
            ModelVariant::Ou { .. } => self.drift_bound.is_some(),
            ModelVariant::ConstantSign { .. } | ModelVariant::Tabulated { .. } => true,
        }
    }

    pub fn drift_sign(&self) -> DriftSign {
        let sign_of = |vals: &mut dyn Iterator<Item = f64>| {
            let (mut neg, mut nonneg) = (false, false);
            for v in vals {
                if v < 0.0 {
                    neg = true;
                } else {
                    nonneg = true;
                }
            }
            match (neg, nonneg) {
                (true, false) => DriftSign::NegativeEverywhere,
                (false, true) => DriftSign::NonNegativeEverywhere,
                _ => DriftSign::Mixed,
            }
        };
        match &self.variant {
            ModelVariant::Ou { .. } => DriftSign::Mixed,
            ModelVariant::ConstantSign { b0, .. } => sign_of(&mut std::iter::once(*b0)),
            ModelVariant::Tabulated { b_values, .. } => sign_of(&mut b_values.iter().copied()),
        }
    }

    #[inline]
    fn clip(&self, b: f64) -> f64 {
        match self.drift_bound {
            Some(k) => b.clamp(-k, k),
            None => b,
        }
    }

    /// Drift without the finiteness check, for hot loops over known-finite states.
    #[inline]
    pub(crate) fn drift_unchecked(&self, t: f64, x: f64) -> f64 {
        let raw = match &self.variant {
            ModelVariant::Ou { theta, mbar, .. } => theta * (mbar - x),
            ModelVariant::ConstantSign { b0, .. } => *b0,
            ModelVariant::Tabulated { grid, b_values, time_dependent, .. } => {
                interp_clamped(grid, b_values, if *time_dependent { t } else { x })
            }
        };
        self.clip(raw)
    }

    #[inline]
    pub(crate) fn vol_unchecked(&self, t: f64, x: f64) -> f64 {
        let raw = match &self.variant {
            ModelVariant::Ou { sigbar, .. } => *sigbar,
            ModelVariant::ConstantSign { sig0, .. } => *sig0,
            ModelVariant::Tabulated { grid, sigma_values, time_dependent, .. } => {
                interp_clamped(grid, sigma_values, if *time_dependent { t } else { x })
            }
        };
        raw.max(self.sigma_floor)
    }

    fn raw_vol(&self, t: f64, x: f64) -> f64 {
        match &self.variant {
            ModelVariant::Tabulated { grid, sigma_values, time_dependent, .. } => {
                interp_clamped(grid, sigma_values, if *time_dependent { t } else { x })
            }
            _ => self.vol_unchecked(t, x),
        }
    }
}

fn check_point(t: f64, x: f64) -> Result<()> {
    if !x.is_finite() || !t.is_finite() {
        return Err(Error::invalid(format!("non-finite evaluation point (t={t}, x={x})")));
    }
    Ok(())
}

/// Provisions drift `b(t, x, m)`.
pub fn eval_b(model: &CoefficientModel, t: f64, x: f64, _m: &Measure1D) -> Result<f64> {
    check_point(t, x)?;
    Ok(model.drift_unchecked(t, x))
}

/// Provisions volatility `sigma(t, x, m)`, never below the model's floor.
pub fn eval_sigma(model: &CoefficientModel, t: f64, x: f64, _m: &Measure1D) -> Result<f64> {
    check_point(t, x)?;
    Ok(model.vol_unchecked(t, x))
}

fn interp_clamped(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[last] {
        return values[last];
    }
    // first index with grid[idx] > x; 1 <= idx <= last
    let idx = grid.partition_point(|g| *g <= x);
    let (x0, x1) = (grid[idx - 1], grid[idx]);
    let (y0, y1) = (values[idx - 1], values[idx]);
    if x == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Checks the lower volatility bound on `sample_grid` (plus the table nodes
/// for tabulated models) and reports sign and growth diagnostics. Grid
/// points are states; for time-dependent tables they are read as times.
pub fn validate_assumptions(model: &CoefficientModel, sample_grid: &[f64]) -> Result<ValidationReport> {
    if sample_grid.is_empty() {
        return Err(Error::invalid("validation grid is empty"));
    }
    let mut points: Vec<f64> = sample_grid.to_vec();
    if let ModelVariant::Tabulated { grid, .. } = &model.variant {
        points.extend(grid.iter().copied());
        points.sort_by(f64::total_cmp);
        points.dedup();
    }
    let time_axis = matches!(model.variant, ModelVariant::Tabulated { time_dependent: true, .. });
    let mut violations = Vec::new();
    let mut sigma_min = f64::INFINITY;
    let (mut drift_growth, mut sigma_growth) = (0.0f64, 0.0f64);
    for &p in &points {
        if !p.is_finite() {
            return Err(Error::invalid(format!("non-finite grid point {p}")));
        }
        let (t, x) = if time_axis { (p, 0.0) } else { (0.0, p) };
        let s = model.raw_vol(t, x);
        sigma_min = sigma_min.min(s);
        if s < model.sigma_floor {
            violations.push(p);
        }
        let scale = 1.0 + x * x;
        drift_growth = drift_growth.max(model.drift_unchecked(t, x).abs() / scale);
        sigma_growth = sigma_growth.max(s / scale);
    }
    if !violations.is_empty() {
        return Err(Error::Assumption { floor: model.sigma_floor, points: violations });
    }
    Ok(ValidationReport {
        sigma_min,
        drift_sign: model.drift_sign(),
        drift_growth,
        sigma_growth,
        bounded: model.is_bounded(),
    })
}
