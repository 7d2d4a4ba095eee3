//! Run configuration: a flat JSON object whose keys double as CLI flags.
//!
//! A run manifest (`{"config": {...}, ...}`) is accepted wherever a config
//! file is, so every output directory can be replayed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::mfsim::{InitialLaw, OneStepParams, SimConfig};
use crate::models::{CoefficientModel, ModelVariant};
use crate::nplayer::{DeviationStrategy, Utility};
use crate::threshold::DEFAULT_TOL;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<CoefficientModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sig0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_floor: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialLaw>,
    /// Particles, players or samples, depending on the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_var: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviations: Option<Vec<DeviationStrategy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_players: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<Utility>,
}

fn missing(key: &str) -> Error {
    Error::Config(format!("missing required key `{key}`"))
}

/// Parses a config or manifest document into a key-value object.
pub fn load_object(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed config {}: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(Error::Config("config must be a JSON object".into()));
    };
    if let Some(Value::Object(inner)) = obj.remove("config") {
        return Ok(inner);
    }
    Ok(obj)
}

/// `--set key=value` override; the value is read as JSON when it parses,
/// as a string otherwise.
pub fn apply_assignment(obj: &mut Map<String, Value>, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("empty key in `{assignment}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    obj.insert(key.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_object(obj: Map<String, Value>) -> Result<Self> {
        serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_object(&self) -> Map<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| missing("seed"))
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }

    /// The model block, with `theta`/`mbar`/`sigbar` or `b0`/`sig0` either
    /// overriding its fields or defining it outright.
    pub fn model(&self) -> Result<CoefficientModel> {
        let ou_keys = self.theta.is_some() || self.mbar.is_some() || self.sigbar.is_some();
        let const_keys = self.b0.is_some() || self.sig0.is_some();
        if ou_keys && const_keys {
            return Err(Error::Config("both OU and constant-sign model keys given".into()));
        }
        let base = self.model.clone();
        let (variant, floor, bound) = match (&base, ou_keys, const_keys) {
            (Some(m), false, false) => (m.variant().clone(), m.sigma_floor(), m.drift_bound()),
            (base, true, _) => {
                let (t0, m0, s0) = match base.as_ref().map(|m| m.variant()) {
                    Some(ModelVariant::Ou { theta, mbar, sigbar }) => (Some(*theta), Some(*mbar), Some(*sigbar)),
                    _ => (None, None, None),
                };
                let theta = self.theta.or(t0).ok_or_else(|| missing("theta"))?;
                let mbar = self.mbar.or(m0).ok_or_else(|| missing("mbar"))?;
                let sigbar = self.sigbar.or(s0).ok_or_else(|| missing("sigbar"))?;
                (ModelVariant::Ou { theta, mbar, sigbar }, floor_of(base), bound_of(base))
            }
            (base, false, true) => {
                let (b_prev, s_prev) = match base.as_ref().map(|m| m.variant()) {
                    Some(ModelVariant::ConstantSign { b0, sig0 }) => (Some(*b0), Some(*sig0)),
                    _ => (None, None),
                };
                let b0 = self.b0.or(b_prev).ok_or_else(|| missing("b0"))?;
                let sig0 = self.sig0.or(s_prev).ok_or_else(|| missing("sig0"))?;
                (ModelVariant::ConstantSign { b0, sig0 }, floor_of(base), bound_of(base))
            }
            (None, false, false) => return Err(missing("model")),
        };
        let mut model = CoefficientModel::new(variant, self.sigma_floor.unwrap_or(floor))?;
        if let Some(k) = self.drift_bound.or(bound) {
            model = model.with_drift_bound(k)?;
        }
        Ok(model)
    }

    pub fn initial(&self, model: &CoefficientModel) -> Result<InitialLaw> {
        match &self.initial {
            Some(law) => Ok(law.clone()),
            None => InitialLaw::ou_invariant(model).map_err(|_| missing("initial")),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let model = self.model()?;
        let initial = self.initial(&model)?;
        let n = self.n.ok_or_else(|| missing("n"))?;
        let steps = self.steps.ok_or_else(|| missing("steps"))?;
        let horizon = self.horizon.ok_or_else(|| missing("horizon"))?;
        let mut cfg = SimConfig::new(model, initial, n, steps, horizon, self.require_seed()?);
        cfg.threshold_tol = self.tol();
        cfg.threads = self.threads;
        Ok(cfg)
    }

    pub fn onestep_params(&self) -> Result<OneStepParams> {
        Ok(OneStepParams {
            theta: self.theta.ok_or_else(|| missing("theta"))?,
            mbar: self.mbar.ok_or_else(|| missing("mbar"))?,
            sigbar: self.sigbar.ok_or_else(|| missing("sigbar"))?,
            delta: self.delta.ok_or_else(|| missing("delta"))?,
            n_samples: self.n.ok_or_else(|| missing("n"))?,
            seed: self.require_seed()?,
            grid_points: self.grid_points.unwrap_or(256),
            threads: self.threads,
        })
    }
}

fn floor_of(m: &Option<CoefficientModel>) -> f64 {
    m.as_ref().map_or(crate::models::DEFAULT_SIGMA_FLOOR, |m| m.sigma_floor())
}

fn bound_of(m: &Option<CoefficientModel>) -> Option<f64> {
    m.as_ref().and_then(|m| m.drift_bound())
}
