// Two moons with noisy labels: a plain cross-entropy net against
// TRADES with adaptive targets, both attacked with PGD at a radius of a
// tenth of the feature scale.

use selfadapt::adversarial::{robust_accuracy, AttackSpec, RobustReport, TradesConfig};
use selfadapt::data::{corrupt, two_moons, CorruptionScheme, CorruptionSpec, LabeledDataset};
use selfadapt::{train, Mlp, MlpSpec, Result, SatConfig, TrainConfig, TrainMode};

/// Mean over features of the population standard deviation.
fn feature_scale(ds: &LabeledDataset) -> f64 {
    let x = ds.inputs();
    let n = x.rows() as f64;
    let d = x.cols();
    let mut total = 0.0;
    for j in 0..d {
        let mean = (0..x.rows()).map(|i| x.row(i)[j]).sum::<f64>() / n;
        total += ((0..x.rows()).map(|i| (x.row(i)[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
    }
    total / d as f64
}

pub fn run_example(epochs: usize) -> Result<Vec<(TrainMode, RobustReport)>> {
    let train_ds = corrupt(
        &two_moons(60, 0.1, 3)?,
        &CorruptionSpec { scheme: CorruptionScheme::CorruptedLabels, rate: 0.4, seed: 4 },
    )?;
    let test = two_moons(500, 0.1, 99)?;
    let eps = 0.1 * feature_scale(&train_ds);
    let attack = AttackSpec { epsilon: eps, step_size: eps / 4.0, steps: 20, lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    let mut out = Vec::new();
    for mode in [TrainMode::Erm, TrainMode::TradesSat] {
        let mut cfg = TrainConfig::for_mode(mode);
        cfg.epochs = epochs;
        cfg.batch_size = 32;
        cfg.optim.lr0 = 0.05;
        cfg.optim.weight_decay = 0.0;
        cfg.sat = SatConfig { start_epoch: epochs / 10, momentum: 0.9 };
        cfg.trades = TradesConfig { inv_lambda: 1.0, attack: AttackSpec { steps: 10, ..attack } };
        let model = Mlp::new(MlpSpec::new(2, vec![128; 3], 2), 0)?;
        let trained = train(&train_ds, &test, model, &cfg, mode)?;
        out.push((mode, robust_accuracy(&trained.model, &test, &attack, 7)?));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    for (mode, r) in run_example(1000)? {
        println!("{mode:<10} clean {:.3}  robust {:.3}", r.clean_accuracy, r.robust_accuracy);
    }
    Ok(())
}
