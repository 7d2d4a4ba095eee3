//! Interacting-particle Euler–Maruyama simulation of the equilibrium
//! McKean–Vlasov dynamics, the non-interacting provisions baseline, and the
//! one-step Gaussian illustration.
//!
//! Both simulators read their Gaussian increments from the same
//! per-particle counter-based streams, so runs with equal seeds are driven
//! by identical noise and can be compared path by path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{equilibrium_drift, equilibrium_vol};
use crate::error::{Error, Result};
use crate::measures::{kde_density, silverman_bandwidth, wasserstein2, GaussianSpec, Measure1D};
use crate::models::{validate_assumptions, CoefficientModel, ModelVariant};
use crate::noise::{NoiseKey, NoiseStream};
use crate::numerics::pairwise_sum;
use crate::threshold::{solve_c_gaussian_ou, solve_c_uniform, DEFAULT_TOL};

/// Law of the initial states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLaw {
    Gaussian(GaussianSpec),
    Atomic(Measure1D),
}

impl InitialLaw {
    /// Stationary law `N(mbar, sigbar^2 / (2 theta))` of an OU model.
    pub fn ou_invariant(model: &CoefficientModel) -> Result<Self> {
        match model.variant() {
            ModelVariant::Ou { theta, mbar, sigbar } => Ok(InitialLaw::Gaussian(GaussianSpec::new(
                *mbar,
                sigbar * sigbar / (2.0 * theta),
            )?)),
            _ => Err(Error::invalid("invariant initial law needs an OU model")),
        }
    }

    /// Draws the initial state from the stream's first slot.
    pub(crate) fn sample(&self, stream: &mut NoiseStream) -> f64 {
        match self {
            InitialLaw::Gaussian(g) => g.mean + g.std_dev() * stream.next_normal(),
            InitialLaw::Atomic(m) => {
                let u = stream.next_uniform();
                let mut acc = 0.0;
                for (x, w) in m.atoms().iter().zip(m.weights()) {
                    acc += w;
                    if u <= acc {
                        return *x;
                    }
                }
                *m.atoms().last().expect("measure is non-empty")
            }
        }
    }

    fn validation_grid(&self) -> Vec<f64> {
        match self {
            InitialLaw::Gaussian(g) => (-12..=12).map(|k| g.mean + 0.5 * k as f64 * g.std_dev()).collect(),
            InitialLaw::Atomic(m) => m.atoms().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_particles: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub seed: u64,
    pub model: CoefficientModel,
    pub initial: InitialLaw,
    #[serde(default = "default_tol")]
    pub threshold_tol: f64,
    /// Worker threads; `None` uses the global rayon pool. Results do not
    /// depend on this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl SimConfig {
    pub fn new(
        model: CoefficientModel,
        initial: InitialLaw,
        n_particles: usize,
        n_steps: usize,
        horizon: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_particles,
            n_steps,
            horizon,
            seed,
            model,
            initial,
            threshold_tol: DEFAULT_TOL,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::invalid("n_particles must be at least 1"));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be at least 1"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.threshold_tol > 0.0) {
            return Err(Error::invalid("threshold_tol must be positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        validate_assumptions(&self.model, &self.initial.validation_grid())?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut times: Vec<f64> = (0..=self.n_steps).map(|k| k as f64 * dt).collect();
        times[self.n_steps] = self.horizon;
        times
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or inline.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Equilibrium,
    Provisions,
    NPlayer,
}

/// Simulated paths stored time-major: `states_at(k)` is the cross-section
/// of all particles at `times[k]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleEnsemble {
    pub kind: EnsembleKind,
    pub times: Vec<f64>,
    pub n_particles: usize,
    states: Vec<f64>,
    /// Threshold used at the start of each step (empty for the baseline).
    pub thresholds: Vec<f64>,
    pub config: SimConfig,
}

impl ParticleEnsemble {
    pub(crate) fn from_parts(
        kind: EnsembleKind,
        config: SimConfig,
        states: Vec<f64>,
        thresholds: Vec<f64>,
    ) -> Self {
        Self {
            kind,
            times: config.times(),
            n_particles: config.n_particles,
            states,
            thresholds,
            config,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn states_at(&self, k: usize) -> &[f64] {
        &self.states[k * self.n_particles..(k + 1) * self.n_particles]
    }

    pub fn state(&self, particle: usize, k: usize) -> f64 {
        self.states[k * self.n_particles + particle]
    }

    pub fn path(&self, particle: usize) -> Vec<f64> {
        (0..self.times.len()).map(|k| self.state(particle, k)).collect()
    }

    pub fn terminal(&self) -> &[f64] {
        self.states_at(self.n_steps())
    }

    pub fn terminal_measure(&self) -> Result<Measure1D> {
        Measure1D::uniform(self.terminal())
    }
}

pub(crate) fn initial_states(cfg: &SimConfig, key: NoiseKey) -> (Vec<f64>, Vec<NoiseStream>) {
    (0..cfg.n_particles)
        .into_par_iter()
        .map(|p| {
            let mut stream = key.stream(p as u64, 0);
            let x0 = cfg.initial.sample(&mut stream);
            (x0, stream)
        })
        .unzip()
}

pub(crate) fn check_finite(states: &[f64], step: usize) -> Result<()> {
    match states.iter().position(|x| !x.is_finite()) {
        Some(particle) => Err(Error::NonFiniteState { step, particle }),
        None => Ok(()),
    }
}

fn simulate(cfg: &SimConfig, kind: EnsembleKind) -> Result<ParticleEnsemble> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let n = cfg.n_particles;
        let dt = cfg.dt();
        let sqrt_dt = dt.sqrt();
        let key = NoiseKey::new(cfg.seed);
        let (mut x, mut streams) = initial_states(cfg, key);
        let mut states = Vec::with_capacity(n * (cfg.n_steps + 1));
        states.extend_from_slice(&x);
        let mut thresholds = Vec::new();
        let mut b = vec![0.0; n];
        for step in 0..cfg.n_steps {
            let t = step as f64 * dt;
            b.par_iter_mut()
                .zip(x.par_iter())
                .for_each(|(bj, &xj)| *bj = cfg.model.drift_unchecked(t, xj));
            let model = &cfg.model;
            match kind {
                EnsembleKind::Provisions => {
                    x.par_iter_mut()
                        .zip(streams.par_iter_mut())
                        .zip(b.par_iter())
                        .for_each(|((xj, s), &bj)| {
                            let dw = sqrt_dt * s.next_normal();
                            *xj = *xj + bj * dt + model.vol_unchecked(t, *xj) * dw;
                        });
                }
                EnsembleKind::Equilibrium => {
                    let c = solve_c_uniform(&b, cfg.threshold_tol)?.c;
                    thresholds.push(c);
                    x.par_iter_mut()
                        .zip(streams.par_iter_mut())
                        .zip(b.par_iter())
                        .for_each(|((xj, s), &bj)| {
                            let dw = sqrt_dt * s.next_normal();
                            let sigma = model.vol_unchecked(t, *xj);
                            *xj = *xj + equilibrium_drift(bj, c) * dt + equilibrium_vol(bj, c, sigma) * dw;
                        });
                }
                EnsembleKind::NPlayer => unreachable!("finite-N runs live in nplayer"),
            }
            check_finite(&x, step)?;
            states.extend_from_slice(&x);
        }
        Ok(ParticleEnsemble::from_parts(kind, cfg.clone(), states, thresholds))
    })
}

/// Euler scheme for `dX = B(t, X, mu_t) dt + Sigma(t, X, mu_t) dW`, with
/// `mu_t` the empirical law of the particles and the threshold re-solved
/// from it at every step.
pub fn simulate_equilibrium_mckv(cfg: &SimConfig) -> Result<ParticleEnsemble> {
    simulate(cfg, EnsembleKind::Equilibrium)
}

/// Independent provisions paths `dP = b dt + sigma dW`.
pub fn simulate_provisions(cfg: &SimConfig) -> Result<ParticleEnsemble> {
    simulate(cfg, EnsembleKind::Provisions)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepParams {
    pub theta: f64,
    pub mbar: f64,
    pub sigbar: f64,
    pub delta: f64,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_grid_points() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneStepSummary {
    pub c: f64,
    pub mean_provisions: f64,
    pub var_provisions: f64,
    pub mean_equity: f64,
    pub var_equity: f64,
    pub mean_diff: f64,
    /// Standard error of the paired difference `X*_T - P_T`.
    pub se_diff: f64,
    pub held_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityTable {
    pub grid: Vec<f64>,
    pub provisions: Vec<f64>,
    pub equity: Vec<f64>,
    pub bandwidth_provisions: f64,
    pub bandwidth_equity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftProfile {
    pub x: Vec<f64>,
    pub b: Vec<f64>,
    pub big_b: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OneStepResult {
    pub initial: Vec<f64>,
    pub provisions: Vec<f64>,
    pub equity: Vec<f64>,
    pub summary: OneStepSummary,
    pub densities: DensityTable,
    pub drift_profile: DriftProfile,
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1.0))
}

/// Single Euler step of size `delta` from the OU invariant law, for the
/// provisions and for the equilibrium dynamics frozen at time zero, on the
/// same `(X_0, Z)` pairs.
pub fn onestep_illustration(p: &OneStepParams) -> Result<OneStepResult> {
    let model = CoefficientModel::ou(p.theta, p.mbar, p.sigbar)?;
    if !(p.delta > 0.0) || !p.delta.is_finite() {
        return Err(Error::invalid(format!("delta must be positive, got {}", p.delta)));
    }
    if p.n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if p.grid_points < 2 {
        return Err(Error::invalid("need at least two density grid points"));
    }
    let var0 = p.sigbar * p.sigbar / (2.0 * p.theta);
    let c = solve_c_gaussian_ou(p.theta, p.mbar, p.mbar, var0, DEFAULT_TOL)?.c;
    let sd0 = var0.sqrt();
    let sqrt_delta = p.delta.sqrt();
    let key = NoiseKey::new(p.seed);
    with_threads(p.threads, move || {
        let draws: Vec<(f64, f64, f64, bool)> = (0..p.n_samples)
            .into_par_iter()
            .map(|i| {
                let mut s = key.stream(i as u64, 0);
                let x0 = p.mbar + sd0 * s.next_normal();
                let dw = sqrt_delta * s.next_normal();
                let b = model.drift_unchecked(0.0, x0);
                let provisions = x0 + b * p.delta + p.sigbar * dw;
                let equity = x0 + equilibrium_drift(b, c) * p.delta + equilibrium_vol(b, c, p.sigbar) * dw;
                (x0, provisions, equity, b + c >= 0.0)
            })
            .collect();
        let initial: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let provisions: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let equity: Vec<f64> = draws.iter().map(|d| d.2).collect();
        let held = draws.iter().filter(|d| d.3).count();
        let diff: Vec<f64> = equity.iter().zip(&provisions).map(|(e, q)| e - q).collect();
        let (mean_provisions, var_provisions) = mean_and_var(&provisions);
        let (mean_equity, var_equity) = mean_and_var(&equity);
        let (mean_diff, var_diff) = mean_and_var(&diff);
        let summary = OneStepSummary {
            c,
            mean_provisions,
            var_provisions,
            mean_equity,
            var_equity,
            mean_diff,
            se_diff: (var_diff / p.n_samples as f64).sqrt(),
            held_fraction: held as f64 / p.n_samples as f64,
        };

        let mp = Measure1D::uniform(&provisions)?;
        let me = Measure1D::uniform(&equity)?;
        let (hp, he) = (silverman_bandwidth(&mp), silverman_bandwidth(&me));
        let lo = provisions.iter().chain(&equity).copied().fold(f64::INFINITY, f64::min) - 3.0 * hp.max(he);
        let hi = provisions.iter().chain(&equity).copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * hp.max(he);
        let grid = linspace(lo, hi, p.grid_points);
        let densities = DensityTable {
            provisions: par_kde(&mp, hp, &grid)?,
            equity: par_kde(&me, he, &grid)?,
            grid,
            bandwidth_provisions: hp,
            bandwidth_equity: he,
        };

        let xs = linspace(p.mbar - 4.0 * sd0, p.mbar + 4.0 * sd0, p.grid_points);
        let b: Vec<f64> = xs.iter().map(|&x| model.drift_unchecked(0.0, x)).collect();
        let drift_profile = DriftProfile {
            big_b: b.iter().map(|&bx| equilibrium_drift(bx, c)).collect(),
            sigma: b.iter().map(|&bx| equilibrium_vol(bx, c, p.sigbar)).collect(),
            x: xs,
            b,
        };
        Ok(OneStepResult { initial, provisions, equity, summary, densities, drift_profile })
    })
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut v: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
    v[n - 1] = hi;
    v
}

/// KDE split across grid points; each point is computed independently so
/// the output does not depend on the pool size.
fn par_kde(m: &Measure1D, h: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let chunks: Vec<Result<Vec<f64>>> = grid.par_chunks(16).map(|g| kde_density(m, h, g)).collect();
    let mut out = Vec::with_capacity(grid.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    /// Threshold in force during the step starting at `t`.
    pub c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub rows: Vec<SummaryRow>,
    pub terminal_grid: Vec<f64>,
    pub terminal_density: Vec<f64>,
    pub bandwidth: f64,
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`); the median of `{0, 2}` is 1.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Per-time moments and quantiles plus a terminal density table. Variances
/// use the unbiased `n - 1` normalization.
pub fn summarize_ensemble(
    e: &ParticleEnsemble,
    grid: Option<&[f64]>,
    bandwidth: Option<f64>,
) -> Result<EnsembleSummary> {
    let rows = (0..e.times.len())
        .map(|k| {
            let xs = e.states_at(k);
            let (mean, variance) = mean_and_var(xs);
            let mut sorted = xs.to_vec();
            sorted.sort_by(f64::total_cmp);
            SummaryRow {
                t: e.times[k],
                mean,
                variance,
                q05: quantile_sorted(&sorted, 0.05),
                q25: quantile_sorted(&sorted, 0.25),
                q50: quantile_sorted(&sorted, 0.5),
                q75: quantile_sorted(&sorted, 0.75),
                q95: quantile_sorted(&sorted, 0.95),
                c: e.thresholds.get(k).copied(),
            }
        })
        .collect();
    let terminal = e.terminal_measure()?;
    let h = match bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(&terminal),
    };
    let terminal_grid = match grid {
        Some(g) => g.to_vec(),
        None => {
            let lo = e.terminal().iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
            let hi = e.terminal().iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
            linspace(lo, hi, 256)
        }
    };
    let terminal_density = par_kde(&terminal, h, &terminal_grid)?;
    Ok(EnsembleSummary { rows, terminal_grid, terminal_density, bandwidth: h })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_prev: usize,
    pub n: usize,
    pub w2: f64,
}

/// Terminal-law distances between equilibrium runs of successive sizes.
/// Each size gets its own seed derived from `(seed, N)`, so repeated sizes
/// reproduce the same run.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_convergence_diagnostic(
    model: &CoefficientModel,
    initial: &InitialLaw,
    horizon: f64,
    n_steps: usize,
    seed: u64,
    n_list: &[usize],
    threshold_tol: f64,
    threads: Option<usize>,
) -> Result<Vec<ConvergenceRow>> {
    if n_list.len() < 2 {
        return Err(Error::invalid("need at least two particle counts"));
    }
    if n_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("particle counts must be nondecreasing"));
    }
    let key = NoiseKey::new(seed);
    let mut terminals = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut cfg = SimConfig::new(model.clone(), initial.clone(), n, n_steps, horizon, key.derive(n as u64).seed());
        cfg.threshold_tol = threshold_tol;
        cfg.threads = threads;
        terminals.push(simulate_equilibrium_mckv(&cfg)?.terminal_measure()?);
    }
    Ok(n_list
        .windows(2)
        .zip(terminals.windows(2))
        .map(|(ns, ms)| ConvergenceRow { n_prev: ns[0], n: ns[1], w2: wasserstein2(&ms[0], &ms[1]) })
        .collect())
}
