// Drives a full experiment from a `key = value` config file: data,
// corruption, every trial, and the artifacts on disk. The same file works
// with `selfadapt train --config`.
//
// `cargo run --release --example experiment_config -- configs/label_noise.conf`

use std::path::Path;

use selfadapt::harness::{run, ExperimentConfig, RunSummary};
use selfadapt::Result;

pub fn run_example(config_text: &str, overrides: &[&str], out: &Path) -> Result<RunSummary> {
    let mut cfg = ExperimentConfig::parse(config_text)?;
    for kv in overrides {
        cfg.set_pair(kv)?;
    }
    cfg.output_dir = out.to_path_buf();
    let summary = run(&cfg)?;
    // The summary carries enough to rebuild the config it came from.
    assert_eq!(summary.to_config()?.to_kv(), cfg.to_kv());
    Ok(summary)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "configs/label_noise.conf".into());
    let text = std::fs::read_to_string(&path)?;
    let out = Path::new("runs").join(Path::new(&path).file_stem().unwrap_or_default());
    let s = run_example(&text, &[], &out)?;
    println!("config hash {}", s.config_hash);
    for t in &s.trials {
        println!(
            "trial {} seed {}: clean-val {:.4}, noisy-train {:.4}, recovered {:.4}, early-stop clean {:.4} at epoch {}",
            t.trial,
            t.seed,
            t.metrics.acc_clean_val,
            t.metrics.acc_noisy_train,
            t.metrics.recovered_accuracy,
            t.early_stop.clean_accuracy,
            t.early_stop.epoch
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
