use shallow_calib::distributions::{Distribution, DistributionSpec};
use shallow_calib::harness::experiment::{run_experiment, run_experiment_full, ExperimentReport};
use shallow_calib::harness::regime::{derive_regime, Regime, RegimeConfig, RegimeExtras};
use shallow_calib::harness::sweep::{sweep, Axis};
use shallow_calib::trainer::{train, Radius, TrainConfig};
use shallow_calib::Network;

fn small() -> RegimeConfig {
    let mut c = derive_regime(Regime::Clairvoyant, 0.5, RegimeExtras::default()).unwrap();
    c.n = 128;
    c.t = 4;
    c.mc_features = 1000;
    c
}

#[test]
fn report_round_trips_through_json() {
    let r = run_experiment(&small()).unwrap();
    let s = serde_json::to_string(&r).unwrap();
    let back: ExperimentReport = serde_json::from_str(&s).unwrap();
    assert_eq!(back, r);
    assert!(s.contains("\"total\":\"inf\""));
}

#[test]
fn saved_network_resumes_identically() {
    let run = run_experiment_full(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.bin");
    run.network.save(&path).unwrap();
    let mut a = Network::load(&path).unwrap();
    let mut b = run.network.clone();
    assert_eq!(a.weights(), b.weights());
    assert_eq!(a.init_weights(), b.init_weights());
    let cfg = TrainConfig {
        eta: 16.0,
        t_max: 3,
        eps_gd: 0.5,
        r_gd: Radius::Infinite,
        seed: 0,
        monitors: true,
    };
    let ta = train(&mut a, &run.sample, &cfg, &[]).unwrap();
    let tb = train(&mut b, &run.sample, &cfg, &[]).unwrap();
    assert_eq!(ta.records, tb.records);
    assert_eq!(a.weights(), b.weights());
}

#[test]
fn width_sweep_keeps_monitors_green() {
    let t = sweep(&small(), Axis::M, &[64.0, 256.0, 1024.0], 5).unwrap();
    assert_eq!(t.rows.len(), 15);
    assert!(t.cells.iter().all(|c| c.monitor_failures == 0 && c.divergences == 0));
    for c in &t.cells {
        assert!((c.config.eta * c.config.rho * c.config.rho - 4.0).abs() < 1e-12);
    }
}

#[test]
fn trained_network_beats_init_on_population() {
    let cfg = RegimeConfig { t: 8, ..small() };
    let r = run_experiment(&cfg).unwrap();
    let p = r.population.unwrap().breakdown;
    assert!(p.excess_logistic < 0.2, "{p:?}");
    assert!(p.chain_violation() <= 1e-12);
    let d = Distribution::new(DistributionSpec::Logistic1d { c: 2.0, lo: -1.0, hi: 1.0 }, true).unwrap();
    assert_eq!(d.input_dim(), 2);
}
