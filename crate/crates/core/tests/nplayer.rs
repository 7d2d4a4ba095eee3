use mutual_holding::measures::Measure1D;
use mutual_holding::mfsim::{InitialLaw, SimConfig};
use mutual_holding::models::CoefficientModel;
use mutual_holding::nplayer::{
    girsanov_weight, nash_gap_estimate, simulate_nplayer, DeviationStrategy, NashGapConfig, PathRecord, Utility,
};
use mutual_holding::threshold::DEFAULT_TOL;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn girsanov_weights_average_to_one() {
    let model = CoefficientModel::ou(1.0, -0.5, 1.0).unwrap().with_drift_bound(5.0).unwrap();
    let initial = InitialLaw::ou_invariant(&model).unwrap();
    for strategy in [DeviationStrategy::AlwaysHold, DeviationStrategy::NeverHold] {
        let z: Vec<f64> = (0..400)
            .map(|r| {
                let cfg = SimConfig::new(model.clone(), initial.clone(), 4, 8, 1.0, 1000 + r);
                let run = simulate_nplayer(&cfg).unwrap();
                let rec = PathRecord::from_run(&run, 0).unwrap();
                girsanov_weight(&rec, &strategy, &model, DEFAULT_TOL).unwrap()
            })
            .collect();
        let (m, se) = mean_se(&z);
        assert!((m - 1.0).abs() < 4.0 * se, "{}: E[Z] = {m} +- {se}", strategy.name());
    }
}

#[test]
fn null_weight_is_one() {
    let model = CoefficientModel::ou(1.0, 0.0, 1.0).unwrap();
    let cfg = SimConfig::new(model.clone(), InitialLaw::ou_invariant(&model).unwrap(), 5, 6, 1.0, 3);
    let run = simulate_nplayer(&cfg).unwrap();
    let rec = PathRecord::from_run(&run, 2).unwrap();
    assert_eq!(girsanov_weight(&rec, &DeviationStrategy::Null, &model, DEFAULT_TOL).unwrap(), 1.0);
}

#[test]
fn record_validation() {
    assert!(PathRecord::new(vec![0.0, 1.0], 2, vec![0.0; 4], 2, vec![0.1]).is_err());
    assert!(PathRecord::new(vec![0.0, 1.0], 2, vec![0.0; 3], 0, vec![0.1]).is_err());
    assert!(PathRecord::new(vec![0.0, 1.0], 2, vec![0.0; 4], 1, vec![0.1]).is_ok());
}

#[test]
fn always_hold_gains_nothing_when_drift_is_negative() {
    // b < 0 everywhere: the base system never holds, and rows of 1 shrink drift and noise alike
    let model = CoefficientModel::constant(-0.5, 1.0).unwrap().with_drift_bound(1.0).unwrap();
    let initial = InitialLaw::Atomic(Measure1D::dirac(0.0).unwrap());
    let mut sim = SimConfig::new(model, initial, 6, 10, 1.0, 77);
    sim.threads = Some(2);
    let cfg = NashGapConfig {
        sim,
        deviations: vec![DeviationStrategy::AlwaysHold],
        replications: 2000,
        all_players: false,
        utility: Utility::Identity,
    };
    let report = nash_gap_estimate(&cfg).unwrap();
    let row = &report.rows[0];
    assert!(row.gain <= 2.0 * row.se_gain, "gain {} se {}", row.gain, row.se_gain);
    assert_eq!(row.n_replications + row.excluded, 2000);
}
