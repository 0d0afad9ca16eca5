// Per-epoch accuracy of plain cross entropy and of self-adaptive training
// on the same noisy data. Cross entropy ends up fitting the wrong labels;
// the adaptive run stops near the clean fraction.
//
// Writes `erm.csv` and `sat.csv` to the directory given as the first
// argument (default `runs/overfitting_curves`).

use std::path::{Path, PathBuf};

use selfadapt::data::{corrupt, gen_synthetic, split_train_val, CorruptionScheme, CorruptionSpec, Generator, SyntheticSpec};
use selfadapt::metrics::{epochs_to_csv, EpochRecord};
use selfadapt::{train, Mlp, MlpSpec, Result, SatConfig, TrainConfig, TrainMode};

pub fn run_example(per_class: usize, epochs: usize, start_epoch: usize, out: Option<&Path>) -> Result<[Vec<EpochRecord>; 2]> {
    let clean = gen_synthetic(&SyntheticSpec {
        generator: Generator::GaussianBlobs,
        classes: 10,
        per_class,
        dim: 32,
        separation: 4.0,
        seed: 0,
    })?;
    let noisy = corrupt(&clean, &CorruptionSpec { scheme: CorruptionScheme::CorruptedLabels, rate: 0.4, seed: 1 })?;
    let (tr, va) = split_train_val(&noisy, noisy.len() * 5 / 6)?;

    let logs = [TrainMode::Erm, TrainMode::Sat].map(|mode| -> Result<Vec<EpochRecord>> {
        let mut cfg = TrainConfig::for_mode(mode);
        cfg.epochs = epochs;
        cfg.sat = SatConfig { start_epoch, momentum: 0.9 };
        let model = Mlp::new(MlpSpec::new(32, vec![128, 128], 10), 0)?;
        let log = train(&tr, &va, model, &cfg, mode)?.log;
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{mode}.csv")), epochs_to_csv(&log))?;
        }
        Ok(log)
    });
    let [erm, sat] = logs;
    Ok([erm?, sat?])
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("runs/overfitting_curves"), PathBuf::from);
    let [erm, sat] = run_example(1200, 300, 60, Some(&dir))?;
    println!("epoch | erm noisy-train clean-val | sat noisy-train clean-val");
    for (a, b) in erm.iter().zip(&sat).filter(|(a, _)| a.epoch % 20 == 0 || a.epoch == 1) {
        println!(
            "{:5} | {:15.3} {:9.3} | {:15.3} {:9.3}",
            a.epoch, a.acc_noisy_train, a.acc_clean_val, b.acc_noisy_train, b.acc_clean_val
        );
    }
    println!("curves written to {}", dir.display());
    Ok(())
}
