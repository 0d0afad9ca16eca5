// Trains a classifier with an extra abstention output on two overlapping
// Gaussian classes, then trades coverage for error by thresholding the
// abstention score.

use selfadapt::data::{gen_synthetic, split_train_val, Generator, SyntheticSpec};
use selfadapt::selective::{risk_coverage, risk_coverage_csv, CoveragePoint};
use selfadapt::{train, Mlp, MlpSpec, Result, TrainConfig, TrainMode};

pub fn run_example(epochs: usize) -> Result<Vec<CoveragePoint>> {
    let ds = gen_synthetic(&SyntheticSpec {
        generator: Generator::GaussianBlobs,
        classes: 2,
        per_class: 1000,
        dim: 2,
        separation: 1.5,
        seed: 0,
    })?;
    let (tr, va) = split_train_val(&ds, 1600)?;
    let mode = TrainMode::Selective;
    let mut cfg = TrainConfig::for_mode(mode);
    cfg.epochs = epochs;
    cfg.batch_size = 128;
    let model = Mlp::new(MlpSpec::new(2, vec![64, 64], 2).with_abstention(), 0)?;
    let out = train(&tr, &va, model, &cfg, mode)?;
    risk_coverage(&out.model, &va, &[1.0, 0.9, 0.8, 0.7, 0.6, 0.5])
}

#[allow(dead_code)]
fn main() -> Result<()> {
    print!("{}", risk_coverage_csv(&run_example(100)?));
    Ok(())
}
