// Trains with moving-average targets on blobs with 40% uniform label noise
// and checks how many training labels the targets recover.
//
// `cargo run --release --example label_recovery` runs the full 10-class,
// 300-epoch setup (about half a minute); `-- quick` shrinks it.

use selfadapt::data::{corrupt, gen_synthetic, split_train_val, CorruptionScheme, CorruptionSpec, Generator, SyntheticSpec};
use selfadapt::metrics::{recovery_report, RecoveryReport};
use selfadapt::{train, Mlp, MlpSpec, Result, SatConfig, TrainConfig, TrainMode};

pub struct Setup {
    pub per_class: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub sat: SatConfig,
}

impl Setup {
    pub fn full() -> Self {
        Setup { per_class: 1200, hidden: vec![128, 128], epochs: 300, sat: SatConfig::default() }
    }

    pub fn quick() -> Self {
        Setup { per_class: 150, hidden: vec![64], epochs: 40, sat: SatConfig { start_epoch: 10, momentum: 0.9 } }
    }
}

pub struct Recovery {
    pub labels_correct_before: f64,
    pub report: RecoveryReport,
    pub clean_val_accuracy: f64,
}

pub fn run_example(setup: &Setup) -> Result<Recovery> {
    let clean = gen_synthetic(&SyntheticSpec {
        generator: Generator::GaussianBlobs,
        classes: 10,
        per_class: setup.per_class,
        dim: 32,
        separation: 4.0,
        seed: 0,
    })?;
    let noisy = corrupt(&clean, &CorruptionSpec { scheme: CorruptionScheme::CorruptedLabels, rate: 0.4, seed: 1 })?;
    let n_train = noisy.len() * 5 / 6;
    let (train_ds, val_ds) = split_train_val(&noisy, n_train)?;

    let mut cfg = TrainConfig::for_mode(TrainMode::Sat);
    cfg.epochs = setup.epochs;
    cfg.sat = setup.sat;
    let model = Mlp::new(MlpSpec::new(32, setup.hidden.clone(), 10), 0)?;
    let out = train(&train_ds, &val_ds, model, &cfg, TrainMode::Sat)?;
    Ok(Recovery {
        labels_correct_before: train_ds.label_agreement(),
        report: recovery_report(&out.targets, train_ds.clean_labels())?,
        clean_val_accuracy: out.log.last().map_or(0.0, |r| r.acc_clean_val),
    })
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let quick = std::env::args().any(|a| a == "quick");
    let r = run_example(&if quick { Setup::quick() } else { Setup::full() })?;
    println!("training labels correct before: {:.4}", r.labels_correct_before);
    println!("argmax of targets correct:      {:.4}", r.report.recovered_accuracy);
    println!("clean validation accuracy:      {:.4}", r.clean_val_accuracy);
    println!("\nconfusion (rows: true class, columns: argmax target)");
    print!("{}", r.report.confusion_csv());
    Ok(())
}
