//! Monte-Carlo ε-Nash gap of the induced strategy.
//!
//! For a deviation `beta` of player `i`, the deviated system is driven by
//! `dW^i - psi dt` with `psi = (B^i_dev - B^i) / Sigma^{ii}_dev` evaluated at
//! the deviated states, and weighted by `Z_T = exp(Σ psi dW^i - ½ psi² dt)`.
//! Under the weighted measure the shifted increments are Brownian, so
//! `E[Z_T U(X^{i,i}_T)]` is the deviated payoff, while the deviating
//! player's own drift stays that of the base system.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::holding::DeviationStrategy;
use super::sim::{step_coefficients, Deviation, PathRecord};
use crate::error::{Error, Result};
use crate::mfsim::{with_threads, SimConfig};
use crate::models::CoefficientModel;
use crate::noise::NoiseKey;
use crate::numerics::pairwise_sum;

/// `exp(Σ_k psi_k dW_k - ½ psi_k² dt)`.
pub fn girsanov_weight_from_psi(psi: &[f64], dw: &[f64], dt: f64) -> f64 {
    let terms: Vec<f64> = psi.iter().zip(dw).map(|(p, w)| p * w - 0.5 * p * p * dt).collect();
    pairwise_sum(&terms).exp()
}

/// Weight `Z_T` of `strategy` for the record's player, with `psi` evaluated
/// along the recorded states.
pub fn girsanov_weight(
    record: &PathRecord,
    strategy: &DeviationStrategy,
    model: &CoefficientModel,
    tol: f64,
) -> Result<f64> {
    strategy.validate()?;
    let mut log_z = 0.0;
    for k in 0..record.increments.len() {
        let t = record.times[k];
        let dt = record.times[k + 1] - t;
        let dev = Deviation { player: record.player, strategy };
        let psi = step_coefficients(model, t, record.states_at(k), tol, Some(dev))?.psi;
        log_z += psi * record.increments[k] - 0.5 * psi * psi * dt;
    }
    let z = log_z.exp();
    if !z.is_finite() {
        return Err(Error::Singular(format!("non-finite Girsanov weight (log {log_z})")));
    }
    Ok(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Utility {
    #[default]
    Identity,
    Clamped { lo: f64, hi: f64 },
}

impl Utility {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Utility::Identity => x,
            Utility::Clamped { lo, hi } => x.clamp(lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashGapConfig {
    pub sim: SimConfig,
    pub deviations: Vec<DeviationStrategy>,
    pub replications: usize,
    /// Average gains over every deviating player instead of player 0 only.
    #[serde(default)]
    pub all_players: bool,
    #[serde(default)]
    pub utility: Utility,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NashGapRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub deviation_name: String,
    pub j_base: f64,
    pub j_dev: f64,
    pub gain: f64,
    pub se_gain: f64,
    pub eps_hat: f64,
    pub n_replications: usize,
    pub seed: u64,
    /// Replications dropped for a non-finite weight or payoff.
    pub excluded: usize,
    pub mean_weight: f64,
    pub se_weight: f64,
    pub max_weight: f64,
    /// `(Σ Z)² / Σ Z²`.
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NashGapReport {
    pub n: usize,
    pub rows: Vec<NashGapRow>,
    /// `max(0, max gain)` over the deviation family.
    pub eps_hat: f64,
    /// Standard error of the largest gain.
    pub se_eps: f64,
}

struct Replication {
    base: f64,
    /// Per deviation: `(Z_T, weighted payoff, gain)`, `None` if non-finite.
    deviations: Vec<Option<(f64, f64, f64)>>,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

fn run_replication(cfg: &NashGapConfig, key: NoiseKey) -> Result<Replication> {
    let sim = &cfg.sim;
    let n = sim.n_particles;
    let dt = sim.dt();
    let sqrt_dt = dt.sqrt();
    let mut streams: Vec<_> = (0..n).map(|p| key.stream(p as u64, 0)).collect();
    let x0: Vec<f64> = streams.iter_mut().map(|s| sim.initial.sample(s)).collect();
    let dw: Vec<Vec<f64>> = (0..sim.n_steps)
        .map(|_| streams.iter_mut().map(|s| sqrt_dt * s.next_normal()).collect())
        .collect();

    let mut x = x0.clone();
    for (step, w) in dw.iter().enumerate() {
        let st = step_coefficients(&sim.model, step as f64 * dt, &x, sim.threshold_tol, None)?;
        st.advance(&mut x, w, dt, None);
    }
    let players: Vec<usize> = if cfg.all_players { (0..n).collect() } else { vec![0] };
    let base_values: Vec<f64> = players.iter().map(|&i| cfg.utility.eval(x[i])).collect();
    let base = pairwise_sum(&base_values) / players.len() as f64;

    let mut deviations = Vec::with_capacity(cfg.deviations.len());
    for strategy in &cfg.deviations {
        let mut weights = Vec::with_capacity(players.len());
        let mut values = Vec::with_capacity(players.len());
        let mut gains = Vec::with_capacity(players.len());
        for (&i, &base_i) in players.iter().zip(&base_values) {
            let mut y = x0.clone();
            let mut log_z = 0.0;
            for (step, w) in dw.iter().enumerate() {
                let dev = Deviation { player: i, strategy };
                let st = step_coefficients(&sim.model, step as f64 * dt, &y, sim.threshold_tol, Some(dev))?;
                log_z += st.psi * w[i] - 0.5 * st.psi * st.psi * dt;
                st.advance(&mut y, w, dt, Some(i));
            }
            let z = log_z.exp();
            let value = z * cfg.utility.eval(y[i]);
            weights.push(z);
            values.push(value);
            gains.push(value - base_i);
        }
        let k = players.len() as f64;
        let (z, v, g) = (pairwise_sum(&weights) / k, pairwise_sum(&values) / k, pairwise_sum(&gains) / k);
        deviations.push((z.is_finite() && v.is_finite() && g.is_finite()).then_some((z, v, g)));
    }
    Ok(Replication { base, deviations })
}

/// Estimates the gain of each deviation and `eps_hat = max(0, max gain)`.
/// Replication `r` is driven by the key derived from `(seed, r)`, so the
/// report does not depend on the number of worker threads.
pub fn nash_gap_estimate(cfg: &NashGapConfig) -> Result<NashGapReport> {
    cfg.sim.validate()?;
    if !cfg.sim.model.is_bounded() {
        return Err(Error::invalid(
            "nash gap needs a model with bounded coefficients (set drift_bound for OU models)",
        ));
    }
    if cfg.replications < 100 {
        return Err(Error::invalid(format!("need at least 100 replications, got {}", cfg.replications)));
    }
    if cfg.deviations.is_empty() {
        return Err(Error::invalid("empty deviation family"));
    }
    for d in &cfg.deviations {
        d.validate()?;
    }
    if let Utility::Clamped { lo, hi } = cfg.utility {
        if !(lo < hi) {
            return Err(Error::invalid("clamped utility needs lo < hi"));
        }
    }
    let key = NoiseKey::new(cfg.sim.seed);
    let reps: Vec<Replication> = with_threads(cfg.sim.threads, || {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, key.derive(r as u64)))
            .collect::<Result<Vec<_>>>()
    })?;

    let base: Vec<f64> = reps.iter().map(|r| r.base).collect();
    let (j_base, _) = mean_and_se(&base);
    let n = cfg.sim.n_particles;
    let mut rows = Vec::with_capacity(cfg.deviations.len());
    for (d, strategy) in cfg.deviations.iter().enumerate() {
        let kept: Vec<(f64, f64, f64)> = reps.iter().filter_map(|r| r.deviations[d]).collect();
        let z: Vec<f64> = kept.iter().map(|k| k.0).collect();
        let values: Vec<f64> = kept.iter().map(|k| k.1).collect();
        let gains: Vec<f64> = kept.iter().map(|k| k.2).collect();
        let (j_dev, _) = mean_and_se(&values);
        let (gain, se_gain) = mean_and_se(&gains);
        let (mean_weight, se_weight) = mean_and_se(&z);
        let sum_z = pairwise_sum(&z);
        let sum_z2 = pairwise_sum(&z.iter().map(|w| w * w).collect::<Vec<_>>());
        rows.push(NashGapRow {
            n,
            deviation_name: strategy.name(),
            j_base,
            j_dev,
            gain,
            se_gain,
            eps_hat: 0.0,
            n_replications: kept.len(),
            seed: cfg.sim.seed,
            excluded: reps.len() - kept.len(),
            mean_weight,
            se_weight,
            max_weight: z.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ess: sum_z * sum_z / sum_z2,
        });
    }
    let best = rows
        .iter()
        .filter(|r| r.gain.is_finite())
        .max_by(|a, b| a.gain.total_cmp(&b.gain))
        .ok_or_else(|| Error::Singular("every replication produced a non-finite weight".into()))?;
    let eps_hat = best.gain.max(0.0);
    let se_eps = best.se_gain;
    for r in &mut rows {
        r.eps_hat = eps_hat;
    }
    Ok(NashGapReport { n, rows, eps_hat, se_eps })
}
