//! Euler scheme for the N-agent system under the induced strategy `Pi^N`,
//! optionally with one player deviating to a row `beta`.
//!
//! Each step freezes the holding profile at the current states and applies
//! `M^{-1}` through the closed-form kernels, so a step costs `O(N)`.

use rayon::prelude::*;
use serde::Serialize;

use super::coefficients::{game_coefficients_solve, ColumnKernel, DeviatedKernel};
use super::holding::{profile_from_drifts, DeviationStrategy, HoldingProfile};
use crate::error::{Error, Result};
use crate::mfsim::{check_finite, initial_states, with_threads, EnsembleKind, ParticleEnsemble, SimConfig};
use crate::models::CoefficientModel;
use crate::noise::NoiseKey;

enum Inverse {
    Column(ColumnKernel),
    Deviated(DeviatedKernel),
    /// LU fallback, stored as the dense inverse.
    Dense { n: usize, inv: Vec<f64> },
}

impl Inverse {
    fn column(pi: &[f64]) -> Result<Self> {
        match ColumnKernel::new(pi) {
            Ok(k) => Ok(Inverse::Column(k)),
            Err(_) => Self::dense(&super::holding::HoldingMatrix::column_constant(pi)?),
        }
    }

    fn dense(gamma: &super::holding::HoldingMatrix) -> Result<Self> {
        let n = gamma.n();
        let ones = vec![1.0; n];
        let coeffs = game_coefficients_solve(gamma, &vec![0.0; n], &ones)?;
        Ok(Inverse::Dense { n, inv: coeffs.diffusion_matrix().to_vec() })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Inverse::Column(k) => k.apply(v),
            Inverse::Deviated(k) => k.apply(v),
            Inverse::Dense { n, inv } => (0..*n)
                .map(|i| crate::numerics::pairwise_sum_by(*n, &|j| inv[i * n + j] * v[j]))
                .collect(),
        }
    }

    fn diagonal(&self, i: usize) -> f64 {
        match self {
            Inverse::Column(k) => k.inverse_entry(i, i),
            Inverse::Deviated(k) => k.inverse_diagonal(i),
            Inverse::Dense { n, inv } => inv[i * n + i],
        }
    }
}

/// A unilateral deviation of `player`.
#[derive(Clone, Copy, Debug)]
pub struct Deviation<'a> {
    pub player: usize,
    pub strategy: &'a DeviationStrategy,
}

/// Coefficients of one step at frozen states.
pub(crate) struct StepState {
    pub profile: HoldingProfile,
    #[allow(dead_code)]
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    drift: Vec<f64>,
    inverse: Inverse,
    /// Girsanov kernel of the deviating player (zero without deviation).
    pub psi: f64,
}

pub(crate) fn step_coefficients(
    model: &CoefficientModel,
    t: f64,
    x: &[f64],
    tol: f64,
    deviation: Option<Deviation<'_>>,
) -> Result<StepState> {
    let n = x.len();
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    b.par_iter_mut()
        .zip(sigma.par_iter_mut())
        .zip(x.par_iter())
        .for_each(|((bj, sj), &xj)| {
            *bj = model.drift_unchecked(t, xj);
            *sj = model.vol_unchecked(t, xj);
        });
    let profile = profile_from_drifts(&b, tol)?;
    let pi = profile.as_fractions();
    let base = Inverse::column(&pi)?;
    let base_drift = base.apply(&b);
    let Some(dev) = deviation else {
        return Ok(StepState { profile, b, sigma, drift: base_drift, inverse: base, psi: 0.0 });
    };
    let i = dev.player;
    if i >= n {
        return Err(Error::invalid(format!("deviating player {i} out of range")));
    }
    let beta = dev.strategy.beta(&pi, x);
    if beta == pi {
        return Ok(StepState { profile, b, sigma, drift: base_drift, inverse: base, psi: 0.0 });
    }
    let inverse = match DeviatedKernel::new(&pi, i, &beta) {
        Ok(k) => Inverse::Deviated(k),
        Err(_) => Inverse::dense(&super::holding::HoldingMatrix::column_constant(&pi)?.with_row(i, &beta)?)?,
    };
    let drift = inverse.apply(&b);
    let own_vol = inverse.diagonal(i) * sigma[i];
    let psi = (drift[i] - base_drift[i]) / own_vol;
    Ok(StepState { profile, b, sigma, drift, inverse, psi })
}

impl StepState {
    /// `x + B dt + Sigma dW` with `dW` given per player. The deviating
    /// player's increment is shifted by `-psi dt` when `shift` names it.
    pub(crate) fn advance(&self, x: &mut [f64], dw: &[f64], dt: f64, shift: Option<usize>) {
        let mut v: Vec<f64> = self.sigma.iter().zip(dw).map(|(s, w)| s * w).collect();
        if let Some(i) = shift {
            v[i] = self.sigma[i] * (dw[i] - self.psi * dt);
        }
        let diffusion = self.inverse.apply(&v);
        for ((xj, bj), dj) in x.iter_mut().zip(&self.drift).zip(&diffusion) {
            *xj = *xj + bj * dt + dj;
        }
    }

    #[allow(dead_code)]
    pub(crate) fn drift(&self) -> &[f64] {
        &self.drift
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NPlayerRun {
    pub ensemble: ParticleEnsemble,
    /// Holding profile in force during each step.
    pub holding: Vec<HoldingProfile>,
}

/// Simulates all `cfg.n_particles` players under `Pi^N`. Noise layout is
/// the one of the mean-field simulators: player `p` reads stream `p`.
pub fn simulate_nplayer(cfg: &SimConfig) -> Result<NPlayerRun> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let n = cfg.n_particles;
        let dt = cfg.dt();
        let sqrt_dt = dt.sqrt();
        let (mut x, mut streams) = initial_states(cfg, NoiseKey::new(cfg.seed));
        let mut states = Vec::with_capacity(n * (cfg.n_steps + 1));
        states.extend_from_slice(&x);
        let mut thresholds = Vec::with_capacity(cfg.n_steps);
        let mut holding = Vec::with_capacity(cfg.n_steps);
        let mut dw = vec![0.0; n];
        for step in 0..cfg.n_steps {
            let t = step as f64 * dt;
            let coeffs = step_coefficients(&cfg.model, t, &x, cfg.threshold_tol, None)?;
            dw.par_iter_mut()
                .zip(streams.par_iter_mut())
                .for_each(|(w, s)| *w = sqrt_dt * s.next_normal());
            coeffs.advance(&mut x, &dw, dt, None);
            check_finite(&x, step)?;
            states.extend_from_slice(&x);
            thresholds.push(coeffs.profile.c);
            holding.push(coeffs.profile);
        }
        Ok(NPlayerRun {
            ensemble: ParticleEnsemble::from_parts(EnsembleKind::NPlayer, cfg.clone(), states, thresholds),
            holding,
        })
    })
}

/// States of all players along a run together with the Brownian
/// increments of one player.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub n: usize,
    /// Time-major, `times.len() * n`.
    pub states: Vec<f64>,
    pub player: usize,
    pub increments: Vec<f64>,
}

impl PathRecord {
    pub fn new(times: Vec<f64>, n: usize, states: Vec<f64>, player: usize, increments: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || n == 0 || states.len() != times.len() * n {
            return Err(Error::invalid("path record has inconsistent dimensions"));
        }
        if increments.len() != times.len() - 1 || player >= n {
            return Err(Error::invalid("path record needs one increment per step for a valid player"));
        }
        Ok(Self { times, n, states, player, increments })
    }

    /// Rebuilds player `i`'s increments from the run's seed.
    pub fn from_run(run: &NPlayerRun, i: usize) -> Result<Self> {
        let e = &run.ensemble;
        if i >= e.n_particles {
            return Err(Error::invalid(format!("player {i} out of range")));
        }
        let sqrt_dt = e.config.dt().sqrt();
        let mut stream = NoiseKey::new(e.seed()).stream(i as u64, 1);
        let increments = (0..e.n_steps()).map(|_| sqrt_dt * stream.next_normal()).collect();
        let states = (0..e.times.len()).flat_map(|k| e.states_at(k).to_vec()).collect();
        Self::new(e.times.clone(), e.n_particles, states, i, increments)
    }

    pub fn states_at(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }
}
