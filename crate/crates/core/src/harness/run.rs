use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig};
use crate::data::{
    corrupt, gen_synthetic, load_cifar_binary, load_idx, split_train_val, write_snapshot,
    LabeledDataset,
};
use crate::error::{Error, Result};
use crate::metrics::{
    early_stop_select, epochs_to_csv, generalization_error, recovery_report, EarlyStop,
    EpochRecord, RecoveryReport,
};
use crate::mlp::{Mlp, MlpSpec};
use crate::sat::SatConfig;
use crate::selective::{risk_coverage, risk_coverage_csv, CoveragePoint};
use crate::train::{train, TrainMode};

/// The configured dataset after corruption, before splitting.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<LabeledDataset> {
    let raw = match &cfg.data {
        DataSource::Synthetic(spec) => gen_synthetic(spec)?,
        DataSource::Cifar { path } => load_cifar_binary(path)?,
        DataSource::Idx { images, labels } => load_idx(images, labels)?,
        // Snapshots carry their own corruption.
        DataSource::Snapshot { path } => return crate::data::load_snapshot(path),
    };
    corrupt(&raw, &cfg.corruption)
}

/// Training and validation sets; the last `val_count` samples are held out.
pub fn prepare_split(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let ds = prepare_dataset(cfg)?;
    if cfg.val_count >= ds.len() {
        return Err(Error::config(
            "data.val_count",
            format!("{} leaves no training samples out of {}", cfg.val_count, ds.len()),
        ));
    }
    split_train_val(&ds, ds.len() - cfg.val_count)
}

pub fn model_spec(cfg: &ExperimentConfig, ds: &LabeledDataset) -> MlpSpec {
    let spec = MlpSpec::new(ds.dim(), cfg.hidden.clone(), ds.class_count());
    if cfg.mode == TrainMode::Selective {
        spec.with_abstention()
    } else {
        spec
    }
}

/// Final-epoch measurements of one trial, or their mean or standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunMetrics {
    pub acc_noisy_train: f64,
    pub acc_clean_train: f64,
    pub acc_noisy_val: f64,
    pub acc_clean_val: f64,
    pub generalization_error: f64,
    pub recovered_accuracy: f64,
    pub early_stop_clean_accuracy: f64,
    pub robust_acc: Option<f64>,
}

impl RunMetrics {
    fn from_log(log: &[EpochRecord], recovered: f64, early: &EarlyStop) -> Self {
        let last = log.last().expect("training runs at least one epoch");
        RunMetrics {
            acc_noisy_train: last.acc_noisy_train,
            acc_clean_train: last.acc_clean_train,
            acc_noisy_val: last.acc_noisy_val,
            acc_clean_val: last.acc_clean_val,
            generalization_error: generalization_error(last),
            recovered_accuracy: recovered,
            early_stop_clean_accuracy: early.clean_accuracy,
            robust_acc: last.robust_acc,
        }
    }

    fn fields(&self) -> [f64; 7] {
        [
            self.acc_noisy_train,
            self.acc_clean_train,
            self.acc_noisy_val,
            self.acc_clean_val,
            self.generalization_error,
            self.recovered_accuracy,
            self.early_stop_clean_accuracy,
        ]
    }

    fn from_fields(f: [f64; 7], robust_acc: Option<f64>) -> Self {
        RunMetrics {
            acc_noisy_train: f[0],
            acc_clean_train: f[1],
            acc_noisy_val: f[2],
            acc_clean_val: f[3],
            generalization_error: f[4],
            recovered_accuracy: f[5],
            early_stop_clean_accuracy: f[6],
            robust_acc,
        }
    }
}

/// Mean and sample standard deviation (zero for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(trials: &[RunMetrics]) -> (RunMetrics, RunMetrics) {
    let mut mean = [0.0; 7];
    let mut std = [0.0; 7];
    for k in 0..7 {
        let col: Vec<f64> = trials.iter().map(|t| t.fields()[k]).collect();
        (mean[k], std[k]) = mean_std(&col);
    }
    let robust: Option<Vec<f64>> = trials.iter().map(|t| t.robust_acc).collect();
    let (rm, rs) = match robust {
        Some(r) => {
            let (m, s) = mean_std(&r);
            (Some(m), Some(s))
        }
        None => (None, None),
    };
    (RunMetrics::from_fields(mean, rm), RunMetrics::from_fields(std, rs))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub early_stop: EarlyStop,
    pub risk_coverage: Option<Vec<CoveragePoint>>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunSummary {
    /// SHA-256 of the resolved `key = value` config text.
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub sat: SatConfig,
    pub clean_fraction: f64,
    pub trials: Vec<TrialSummary>,
    pub mean: RunMetrics,
    pub std: RunMetrics,
    /// Label-recovery statistics of the first trial.
    pub recovery: RecoveryReport,
}

impl RunSummary {
    /// Rebuilds the config this summary was produced from.
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        // The source decides which other data keys are valid.
        if let Some(source) = self.config.get("data.source") {
            cfg.set("data.source", source)?;
        }
        for (k, v) in self.config.iter().filter(|(k, _)| *k != "data.source") {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    Sha256::digest(cfg.to_kv().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn config_map(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    cfg.to_kv()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn robust_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,clean_acc,robust_acc\n");
    for r in log {
        if let Some(robust) = r.robust_acc {
            out.push_str(&format!("{},{},{}\n", r.epoch, r.acc_clean_val, robust));
        }
    }
    out
}

/// Trains every trial and writes, under `output_dir`:
/// `train.satd`, `summary.json`, and per trial `trial_k/` with
/// `epochs.csv`, `targets.satt`, `model.satm`, `recovery_confusion.csv`,
/// `recovery_weights.csv`, plus `risk_coverage.csv` for selective runs and
/// `robust.csv` when robust evaluation is enabled.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let (train_ds, val_ds) = prepare_split(cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    write_snapshot(&train_ds, fs::File::create(out.join("train.satd"))?)?;

    let spec = model_spec(cfg, &train_ds);
    let mut trials = Vec::with_capacity(cfg.trials);
    let mut first_recovery = None;
    for k in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(k as u64);
        let model = Mlp::new(spec.clone(), seed)?;
        let outcome = train(&train_ds, &val_ds, model, &cfg.train_config(seed), cfg.mode)?;

        let dir = out.join(format!("trial_{k}"));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("epochs.csv"), epochs_to_csv(&outcome.log))?;
        outcome.targets.write_to(fs::File::create(dir.join("targets.satt"))?)?;
        outcome.model.write_to(fs::File::create(dir.join("model.satm"))?)?;
        let recovery = recovery_report(&outcome.targets, train_ds.clean_labels())?;
        fs::write(dir.join("recovery_confusion.csv"), recovery.confusion_csv())?;
        fs::write(dir.join("recovery_weights.csv"), recovery.weight_csv())?;
        if cfg.robust_eval_every.is_some() {
            fs::write(dir.join("robust.csv"), robust_csv(&outcome.log))?;
        }
        let risk = if cfg.mode == TrainMode::Selective {
            let points = risk_coverage(&outcome.model, &val_ds, &cfg.coverages)?;
            fs::write(dir.join("risk_coverage.csv"), risk_coverage_csv(&points))?;
            Some(points)
        } else {
            None
        };

        let early = early_stop_select(&outcome.log)?;
        trials.push(TrialSummary {
            trial: k,
            seed,
            metrics: RunMetrics::from_log(&outcome.log, recovery.recovered_accuracy, &early),
            early_stop: early,
            risk_coverage: risk,
        });
        first_recovery.get_or_insert(recovery);
    }

    let metrics: Vec<RunMetrics> = trials.iter().map(|t| t.metrics).collect();
    let (mean, std) = aggregate(&metrics);
    let summary = RunSummary {
        config_hash: config_hash(cfg),
        config: config_map(cfg),
        sat: cfg.sat(),
        clean_fraction: train_ds.clean_fraction(),
        trials,
        mean,
        std,
        recovery: first_recovery.expect("at least one trial"),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
