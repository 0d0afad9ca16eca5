// Each example is compiled in here and run at a reduced scale.

macro_rules! example {
    ($name:ident) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($name), ".rs"));
        }
    };
}

example!(gradient_check);
example!(corruption_schemes);
example!(label_recovery);
example!(overfitting_curves);
example!(selective_risk_coverage);
example!(adversarial_trades);
example!(capacity_sweep);
example!(experiment_config);

#[test]
fn gradient_check_runs() {
    for (name, r) in gradient_check::run_example().unwrap() {
        assert!(r.max_relative_error < 1e-6, "{name}: {}", r.max_relative_error);
    }
}

#[test]
fn corruption_schemes_runs() {
    let stats = corruption_schemes::run_example(0.4).unwrap();
    assert_eq!(stats.len(), 5);
    let labels = &stats[0];
    assert!((labels.label_agreement - (1.0 - 0.4 * 0.9)).abs() < 0.02);
    assert_eq!(labels.inputs_changed, 0.0);
    assert_eq!(stats[4].selected, 0.0);
}

#[test]
fn label_recovery_quick() {
    let r = label_recovery::run_example(&label_recovery::Setup::quick()).unwrap();
    assert!(r.report.recovered_accuracy > r.labels_correct_before + 0.2);
    assert_eq!(r.report.total(), 1250);
}

#[test]
fn overfitting_curves_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let [erm, sat] = overfitting_curves::run_example(30, 4, 2, Some(dir.path())).unwrap();
    assert_eq!((erm.len(), sat.len()), (4, 4));
    // Identical until the targets start moving.
    assert_eq!(erm[..2], sat[..2]);
    assert!(dir.path().join("erm.csv").exists() && dir.path().join("sat.csv").exists());
}

#[test]
fn selective_error_falls_with_coverage() {
    let table = selective_risk_coverage::run_example(100).unwrap();
    let errors: Vec<f64> = table.iter().map(|p| p.selective_error.unwrap()).collect();
    assert!(errors[2] < errors[0]);
}

#[test]
fn adversarial_trades_smoke() {
    for (_, r) in adversarial_trades::run_example(20).unwrap() {
        assert!(r.robust_accuracy <= r.clean_accuracy);
    }
}

#[test]
fn capacity_sweep_tiny() {
    let dir = tempfile::tempdir().unwrap();
    let points = capacity_sweep::run_example(&[16, 32], 20, 2, dir.path().to_path_buf()).unwrap();
    let sats: Vec<_> = points.iter().map(|p| p.outcome.as_ref().unwrap().sat).collect();
    assert_eq!(sats[0].start_epoch, 160);
    assert_eq!(sats[1].start_epoch, 80);
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn experiment_config_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/selective.conf")).unwrap();
    let s = experiment_config::run_example(&text, &["train.epochs=3"], dir.path()).unwrap();
    assert!(s.trials[0].risk_coverage.is_some());
    assert!(dir.path().join("trial_0/risk_coverage.csv").exists());
}

#[test]
fn shipped_configs_parse() {
    for name in ["label_noise", "selective", "moons_trades"] {
        let path = format!("{}/configs/{name}.conf", env!("CARGO_MANIFEST_DIR"));
        selfadapt::harness::ExperimentConfig::load(&path).unwrap().validate().unwrap();
    }
}
