//! C ABI over `mutual_holding`.
//!
//! Every function returns an [`MhStatus`]; on failure the message is
//! available from [`mh_last_error`] on the same thread. Models and
//! ensembles are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use mutual_holding::equilibrium::compute_fields;
use mutual_holding::measures::{wasserstein2, GaussianSpec, Measure1D};
use mutual_holding::mfsim::{simulate_equilibrium_mckv, simulate_provisions, InitialLaw, ParticleEnsemble, SimConfig};
use mutual_holding::models::CoefficientModel;
use mutual_holding::nplayer::{game_coefficients_solve, simulate_nplayer, HoldingMatrix};
use mutual_holding::threshold::{solve_c_empirical, solve_c_gaussian_ou};
use mutual_holding::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MhEnsembleKind {
    Equilibrium = 0,
    Provisions = 1,
    NPlayer = 2,
}

/// Opaque provisions model.
pub struct MhModel {
    inner: CoefficientModel,
}

/// Opaque simulated ensemble.
pub struct MhEnsemble {
    inner: ParticleEnsemble,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).expect("nul bytes removed"));
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MhStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            MhStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            if e.is_numerical() {
                MhStatus::Numerical
            } else {
                MhStatus::InvalidArgument
            }
        }
        Err(_) => {
            set_error("internal panic");
            MhStatus::Panic
        }
    }
}

unsafe fn input<'a>(ptr: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(ptr, n))
}

unsafe fn output<'a, T>(ptr: *mut T, n: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, n))
}

unsafe fn out_scalar<'a, T>(ptr: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or(Failure::Null(what))
}

fn measure(atoms: &[f64], weights: Option<&[f64]>) -> Result<Measure1D, Failure> {
    Ok(match weights {
        Some(w) => Measure1D::new(atoms.to_vec(), w.to_vec())?,
        None => Measure1D::uniform(atoms)?,
    })
}

/// Message of the last failure on this thread (empty after a success).
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn mh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// OU provisions `b = theta (mbar - x)`, `sigma = sigbar`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mh_model_ou(theta: f64, mbar: f64, sigbar: f64, out: *mut *mut MhModel) -> MhStatus {
    guard(|| {
        let slot = out_scalar(out, "out")?;
        *slot = Box::into_raw(Box::new(MhModel { inner: CoefficientModel::ou(theta, mbar, sigbar)? }));
        Ok(())
    })
}

/// Constant drift `b0` and volatility `sig0`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mh_model_constant(b0: f64, sig0: f64, out: *mut *mut MhModel) -> MhStatus {
    guard(|| {
        let slot = out_scalar(out, "out")?;
        *slot = Box::into_raw(Box::new(MhModel { inner: CoefficientModel::constant(b0, sig0)? }));
        Ok(())
    })
}

/// Declares `|b| <= bound` on the model.
///
/// # Safety
/// `model` must come from a `mh_model_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn mh_model_set_drift_bound(model: *mut MhModel, bound: f64) -> MhStatus {
    guard(|| {
        let m = model.as_mut().ok_or(Failure::Null("model"))?;
        m.inner = m.inner.clone().with_drift_bound(bound)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from a `mh_model_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn mh_model_free(model: *mut MhModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Threshold for drift values `b` with weights `w` (uniform when null).
///
/// # Safety
/// `b` (and `w` when non-null) must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn mh_solve_threshold(
    b: *const f64,
    w: *const f64,
    n: usize,
    tol: f64,
    out_c: *mut f64,
    out_residual: *mut f64,
) -> MhStatus {
    guard(|| {
        let b = input(b, n, "b")?;
        let uniform;
        let w = if w.is_null() {
            uniform = vec![1.0 / n as f64; n];
            &uniform[..]
        } else {
            input(w, n, "w")?
        };
        let r = solve_c_empirical(b, w, tol)?;
        *out_scalar(out_c, "out_c")? = r.c;
        if let Some(res) = out_residual.as_mut() {
            *res = r.residual;
        }
        Ok(())
    })
}

/// Threshold for an OU model started from `N(mu_mean, mu_var)`.
///
/// # Safety
/// `out_c` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mh_solve_threshold_gaussian_ou(
    theta: f64,
    mbar: f64,
    mu_mean: f64,
    mu_var: f64,
    tol: f64,
    out_c: *mut f64,
) -> MhStatus {
    guard(|| {
        *out_scalar(out_c, "out_c")? = solve_c_gaussian_ou(theta, mbar, mu_mean, mu_var, tol)?.c;
        Ok(())
    })
}

/// Equilibrium fields on the atoms of a measure. `weights` may be null.
/// `out_drift`, `out_vol` and `out_holding` receive `n` entries each.
///
/// # Safety
/// All non-null array pointers must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn mh_equilibrium_fields(
    model: *const MhModel,
    t: f64,
    atoms: *const f64,
    weights: *const f64,
    n: usize,
    tol: f64,
    out_c: *mut f64,
    out_drift: *mut f64,
    out_vol: *mut f64,
    out_holding: *mut u8,
) -> MhStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        let atoms = input(atoms, n, "atoms")?;
        let weights = if weights.is_null() { None } else { Some(input(weights, n, "weights")?) };
        let f = compute_fields(&model.inner, t, &measure(atoms, weights)?, tol)?;
        *out_scalar(out_c, "out_c")? = f.c;
        output(out_drift, n, "out_drift")?.copy_from_slice(&f.drift);
        output(out_vol, n, "out_vol")?.copy_from_slice(&f.vol);
        for (o, h) in output(out_holding, n, "out_holding")?.iter_mut().zip(&f.holding) {
            *o = *h as u8;
        }
        Ok(())
    })
}

/// W2 distance between two atomic measures; null weights mean uniform.
///
/// # Safety
/// Arrays must hold `n1` and `n2` elements respectively.
#[no_mangle]
pub unsafe extern "C" fn mh_wasserstein2(
    atoms1: *const f64,
    weights1: *const f64,
    n1: usize,
    atoms2: *const f64,
    weights2: *const f64,
    n2: usize,
    out: *mut f64,
) -> MhStatus {
    guard(|| {
        let w1 = if weights1.is_null() { None } else { Some(input(weights1, n1, "weights1")?) };
        let w2 = if weights2.is_null() { None } else { Some(input(weights2, n2, "weights2")?) };
        let m1 = measure(input(atoms1, n1, "atoms1")?, w1)?;
        let m2 = measure(input(atoms2, n2, "atoms2")?, w2)?;
        *out_scalar(out, "out")? = wasserstein2(&m1, &m2);
        Ok(())
    })
}

/// Simulates an ensemble started from `N(initial_mean, initial_var)`, or
/// from a point mass when `initial_var <= 0`. `threads = 0` uses the
/// default pool; results do not depend on it.
///
/// # Safety
/// `model` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn mh_simulate(
    model: *const MhModel,
    kind: MhEnsembleKind,
    n_particles: usize,
    n_steps: usize,
    horizon: f64,
    seed: u64,
    initial_mean: f64,
    initial_var: f64,
    threads: usize,
    out: *mut *mut MhEnsemble,
) -> MhStatus {
    guard(|| {
        let model = model.as_ref().ok_or(Failure::Null("model"))?;
        let slot = out_scalar(out, "out")?;
        let initial = if initial_var > 0.0 {
            InitialLaw::Gaussian(GaussianSpec::new(initial_mean, initial_var)?)
        } else {
            InitialLaw::Atomic(Measure1D::dirac(initial_mean)?)
        };
        let mut cfg = SimConfig::new(model.inner.clone(), initial, n_particles, n_steps, horizon, seed);
        cfg.threads = (threads > 0).then_some(threads);
        let inner = match kind {
            MhEnsembleKind::Equilibrium => simulate_equilibrium_mckv(&cfg)?,
            MhEnsembleKind::Provisions => simulate_provisions(&cfg)?,
            MhEnsembleKind::NPlayer => simulate_nplayer(&cfg)?.ensemble,
        };
        *slot = Box::into_raw(Box::new(MhEnsemble { inner }));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be a live handle; output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn mh_ensemble_dims(
    ensemble: *const MhEnsemble,
    out_particles: *mut usize,
    out_steps: *mut usize,
) -> MhStatus {
    guard(|| {
        let e = &ensemble.as_ref().ok_or(Failure::Null("ensemble"))?.inner;
        *out_scalar(out_particles, "out_particles")? = e.n_particles;
        *out_scalar(out_steps, "out_steps")? = e.n_steps();
        Ok(())
    })
}

/// Copies the cross-section at time index `k` (0..=steps) into `out`,
/// which must hold `n_particles` doubles.
///
/// # Safety
/// `ensemble` must be a live handle and `out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mh_ensemble_states(
    ensemble: *const MhEnsemble,
    k: usize,
    out: *mut f64,
    len: usize,
) -> MhStatus {
    guard(|| {
        let e = &ensemble.as_ref().ok_or(Failure::Null("ensemble"))?.inner;
        if k > e.n_steps() || len != e.n_particles {
            return Err(Error::InvalidInput(format!(
                "time index {k} of {} or buffer length {len} of {}",
                e.n_steps(),
                e.n_particles
            ))
            .into());
        }
        output(out, len, "out")?.copy_from_slice(e.states_at(k));
        Ok(())
    })
}

/// Per-step thresholds; `out` must hold `steps` doubles. Provisions
/// ensembles have none and report `*out_len = 0`.
///
/// # Safety
/// `ensemble` must be a live handle and `out` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mh_ensemble_thresholds(
    ensemble: *const MhEnsemble,
    out: *mut f64,
    len: usize,
    out_len: *mut usize,
) -> MhStatus {
    guard(|| {
        let e = &ensemble.as_ref().ok_or(Failure::Null("ensemble"))?.inner;
        let th = &e.thresholds;
        *out_scalar(out_len, "out_len")? = th.len();
        if th.is_empty() {
            return Ok(());
        }
        if len < th.len() {
            return Err(Error::InvalidInput(format!("buffer of {len} for {} thresholds", th.len())).into());
        }
        output(out, th.len(), "out")?.copy_from_slice(th);
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mh_ensemble_free(ensemble: *mut MhEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Finite-N coefficients for the row-major holding matrix `gamma` (`n*n`).
/// `out_drift` receives `n` entries, `out_diffusion` `n*n` row-major.
///
/// # Safety
/// Array pointers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn mh_game_coefficients(
    gamma: *const f64,
    n: usize,
    b: *const f64,
    sigma: *const f64,
    out_drift: *mut f64,
    out_diffusion: *mut f64,
) -> MhStatus {
    guard(|| {
        let g = HoldingMatrix::new(n, input(gamma, n * n, "gamma")?.to_vec())?;
        let c = game_coefficients_solve(&g, input(b, n, "b")?, input(sigma, n, "sigma")?)?;
        output(out_drift, n, "out_drift")?.copy_from_slice(c.drift());
        output(out_diffusion, n * n, "out_diffusion")?.copy_from_slice(c.diffusion_matrix());
        Ok(())
    })
}
