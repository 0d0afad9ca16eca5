// Sweeps the hidden width. Each point picks its warm-up length and target
// momentum from the width-scaling rule, then runs in its own directory.

use std::path::PathBuf;

use selfadapt::harness::{sweep, sweep_csv, ExperimentConfig, SweepAxis, SweepPoint, SweepSpec};
use selfadapt::Result;

pub fn run_example(widths: &[usize], per_class: usize, epochs: usize, out: PathBuf) -> Result<Vec<SweepPoint>> {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_lines(&format!(
        "data.per_class = {per_class}\n\
         data.val_count = {}\n\
         train.epochs = {epochs}\n",
        per_class * 2
    ))?;
    cfg.output_dir = out;
    let spec = SweepSpec::new(SweepAxis::Width, widths);
    spec.validate(&cfg)?;
    sweep(&cfg, &spec)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("runs/capacity_sweep"), PathBuf::from);
    let points = run_example(&[16, 32, 64, 128], 300, 200, out.clone())?;
    print!("{}", sweep_csv(SweepAxis::Width, &points));
    println!("per-width runs under {}", out.display());
    Ok(())
}
