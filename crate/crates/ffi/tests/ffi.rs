use std::ffi::CStr;
use std::ptr;

use mutual_holding_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mh_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn threshold_matches_hand_value() {
    // b = (-1, 1) uniform: c = (c + 1) / 4, so c = 1/3
    let b = [-1.0, 1.0];
    let (mut c, mut res) = (0.0, 1.0);
    let st = unsafe { mh_solve_threshold(b.as_ptr(), ptr::null(), 2, 1e-12, &mut c, &mut res) };
    assert_eq!(st, MhStatus::Ok);
    assert!((c - 1.0 / 3.0).abs() < 1e-14);
    assert!(res.abs() < 1e-14);
    assert!(last_error().is_empty());
}

#[test]
fn null_and_bad_arguments() {
    let mut c = 0.0;
    let st = unsafe { mh_solve_threshold(ptr::null(), ptr::null(), 2, 1e-12, &mut c, ptr::null_mut()) };
    assert_eq!(st, MhStatus::NullPointer);
    assert!(!last_error().is_empty());

    let b = [1.0, 2.0];
    let w = [0.7, 0.7];
    let st = unsafe { mh_solve_threshold(b.as_ptr(), w.as_ptr(), 2, 1e-12, &mut c, ptr::null_mut()) };
    assert_eq!(st, MhStatus::InvalidArgument);

    let mut m: *mut MhModel = ptr::null_mut();
    assert_eq!(unsafe { mh_model_ou(1.0, 0.0, -1.0, &mut m) }, MhStatus::InvalidArgument);
    assert!(m.is_null());
    assert_eq!(unsafe { mh_model_ou(1.0, 0.0, 1.0, ptr::null_mut()) }, MhStatus::NullPointer);
    unsafe { mh_model_free(ptr::null_mut()) };
    unsafe { mh_ensemble_free(ptr::null_mut()) };
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(mh_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn equilibrium_fields_roundtrip() {
    let mut m: *mut MhModel = ptr::null_mut();
    assert_eq!(unsafe { mh_model_ou(1.0, 0.0, 1.0, &mut m) }, MhStatus::Ok);
    let atoms = [-1.0, 0.0, 2.0];
    let mut c = 0.0;
    let mut drift = [0.0; 3];
    let mut vol = [0.0; 3];
    let mut held = [9u8; 3];
    let st = unsafe {
        mh_equilibrium_fields(
            m,
            0.0,
            atoms.as_ptr(),
            ptr::null(),
            3,
            1e-12,
            &mut c,
            drift.as_mut_ptr(),
            vol.as_mut_ptr(),
            held.as_mut_ptr(),
        )
    };
    assert_eq!(st, MhStatus::Ok);
    for j in 0..3 {
        let b = -atoms[j];
        let h = b + c >= 0.0;
        assert_eq!(held[j], h as u8);
        assert_eq!(vol[j], if h { 0.5 } else { 1.0 });
        let expected = if h { 0.5 * (b + c) } else { b + c };
        assert!((drift[j] - expected).abs() < 1e-14);
    }
    unsafe { mh_model_free(m) };
}

#[test]
fn wasserstein_of_shift() {
    let a = [0.0, 1.0, 2.0];
    let b = [0.5, 1.5, 2.5];
    let mut d = 0.0;
    let st = unsafe { mh_wasserstein2(a.as_ptr(), ptr::null(), 3, b.as_ptr(), ptr::null(), 3, &mut d) };
    assert_eq!(st, MhStatus::Ok);
    assert!((d - 0.5).abs() < 1e-14);
}

fn simulate(kind: MhEnsembleKind, threads: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m: *mut MhModel = ptr::null_mut();
    assert_eq!(unsafe { mh_model_ou(1.0, -0.5, 1.0, &mut m) }, MhStatus::Ok);
    assert_eq!(unsafe { mh_model_set_drift_bound(m, 10.0) }, MhStatus::Ok);
    let mut e: *mut MhEnsemble = ptr::null_mut();
    let st = unsafe { mh_simulate(m, kind, 64, 20, 1.0, 5, -0.5, 0.5, threads, &mut e) };
    assert_eq!(st, MhStatus::Ok, "{}", last_error());
    unsafe { mh_model_free(m) };

    let (mut n, mut steps) = (0, 0);
    assert_eq!(unsafe { mh_ensemble_dims(e, &mut n, &mut steps) }, MhStatus::Ok);
    assert_eq!((n, steps), (64, 20));
    let mut x = vec![0.0; n];
    assert_eq!(unsafe { mh_ensemble_states(e, steps, x.as_mut_ptr(), n) }, MhStatus::Ok);
    assert_eq!(unsafe { mh_ensemble_states(e, steps + 1, x.as_mut_ptr(), n) }, MhStatus::InvalidArgument);
    assert_eq!(unsafe { mh_ensemble_states(e, 0, x.as_mut_ptr(), n - 1) }, MhStatus::InvalidArgument);
    assert_eq!(unsafe { mh_ensemble_states(e, steps, x.as_mut_ptr(), n) }, MhStatus::Ok);
    let mut c = vec![0.0; steps];
    let mut len = 0;
    assert_eq!(unsafe { mh_ensemble_thresholds(e, c.as_mut_ptr(), steps, &mut len) }, MhStatus::Ok);
    c.truncate(len);
    unsafe { mh_ensemble_free(e) };
    (x, c)
}

#[test]
fn ensembles_are_thread_invariant() {
    for kind in [MhEnsembleKind::Equilibrium, MhEnsembleKind::Provisions, MhEnsembleKind::NPlayer] {
        let (x1, c1) = simulate(kind, 1);
        let (x4, c4) = simulate(kind, 4);
        assert_eq!(x1, x4);
        assert_eq!(c1, c4);
        assert!(x1.iter().all(|v| v.is_finite()));
        let expect_c = if kind == MhEnsembleKind::Provisions { 0 } else { 20 };
        assert_eq!(c1.len(), expect_c);
    }
}

#[test]
fn game_coefficients_two_player_example() {
    let gamma = [1.0; 4];
    let b = [0.0, 2.0];
    let sigma = [1.0, 1.0];
    let mut drift = [0.0; 2];
    let mut diff = [0.0; 4];
    let st = unsafe {
        mh_game_coefficients(gamma.as_ptr(), 2, b.as_ptr(), sigma.as_ptr(), drift.as_mut_ptr(), diff.as_mut_ptr())
    };
    assert_eq!(st, MhStatus::Ok);
    assert!((drift[0] - 0.5).abs() < 1e-14 && (drift[1] - 1.5).abs() < 1e-14);
    // inverse of [[1.5, -0.5], [-0.5, 1.5]]
    let inv = [0.75, 0.25, 0.25, 0.75];
    for k in 0..4 {
        assert!((diff[k] - inv[k]).abs() < 1e-14, "{diff:?}");
    }
    let bad = [f64::NAN; 2];
    let st = unsafe {
        mh_game_coefficients(gamma.as_ptr(), 2, bad.as_ptr(), sigma.as_ptr(), drift.as_mut_ptr(), diff.as_mut_ptr())
    };
    assert_ne!(st, MhStatus::Ok);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/mutual_holding.h");
    for name in [
        "mh_last_error",
        "mh_version",
        "mh_model_ou",
        "mh_model_constant",
        "mh_model_set_drift_bound",
        "mh_model_free",
        "mh_solve_threshold",
        "mh_solve_threshold_gaussian_ou",
        "mh_equilibrium_fields",
        "mh_wasserstein2",
        "mh_simulate",
        "mh_ensemble_dims",
        "mh_ensemble_states",
        "mh_ensemble_thresholds",
        "mh_ensemble_free",
        "mh_game_coefficients",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct MhModel MhModel;"));
}
