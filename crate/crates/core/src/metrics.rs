//! Accuracy curves, label recovery, the capacity scaling rule and
//! early-stopping selection.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ops::argmax;
use crate::sat::TargetStore;

/// One row of a training log.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub acc_noisy_train: f64,
    pub acc_clean_train: f64,
    pub acc_noisy_val: f64,
    pub acc_clean_val: f64,
    pub robust_acc: Option<f64>,
}

pub const EPOCH_CSV_HEADER: &str =
    "epoch,lr,loss,acc_noisy_train,acc_clean_train,acc_noisy_val,acc_clean_val,robust_acc";

impl EpochRecord {
    /// CSV row in header order. Floats use Rust's shortest round-trip
    /// formatting; a missing robust accuracy is an empty field.
    pub fn to_csv_row(&self) -> String {
        let robust = self.robust_acc.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.lr,
            self.loss,
            self.acc_noisy_train,
            self.acc_clean_train,
            self.acc_noisy_val,
            self.acc_clean_val,
            robust
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
        if fields.len() != 8 {
            return Err(Error::invalid(format!(
                "epoch row needs 8 fields, found {}",
                fields.len()
            )));
        }
        let float = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::invalid(format!("bad number `{}` in epoch row", fields[i])))
        };
        Ok(EpochRecord {
            epoch: fields[0]
                .parse()
                .map_err(|_| Error::invalid(format!("bad epoch `{}`", fields[0])))?,
            lr: float(1)?,
            loss: float(2)?,
            acc_noisy_train: float(3)?,
            acc_clean_train: float(4)?,
            acc_noisy_val: float(5)?,
            acc_clean_val: float(6)?,
            robust_acc: if fields[7].is_empty() { None } else { Some(float(7)?) },
        })
    }
}

pub fn epochs_to_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(EPOCH_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn epochs_from_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(EPOCH_CSV_HEADER) {
        return Err(Error::invalid("epoch CSV header mismatch"));
    }
    lines.filter(|l| !l.is_empty()).map(EpochRecord::from_csv_row).collect()
}

/// Accuracy gap between the noisy training and noisy validation sets.
pub fn generalization_error(record: &EpochRecord) -> f64 {
    record.acc_noisy_train - record.acc_noisy_val
}

/// Fraction of samples whose target argmax equals the clean label.
pub fn recovered_accuracy(store: &TargetStore, clean_labels: &[usize]) -> Result<f64> {
    if store.len() != clean_labels.len() {
        return Err(Error::invalid(format!(
            "{} targets but {} labels",
            store.len(),
            clean_labels.len()
        )));
    }
    if store.is_empty() {
        return Err(Error::invalid("recovered accuracy of an empty store"));
    }
    let hits = clean_labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(store.row(i)) == y)
        .count();
    Ok(hits as f64 / store.len() as f64)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecoveryReport {
    pub recovered_accuracy: f64,
    /// `confusion[clean][recovered]` sample counts.
    pub confusion: Vec<Vec<usize>>,
    /// Mean sample weight per cell; `None` where the cell is empty.
    pub weight_matrix: Vec<Vec<Option<f64>>>,
}

impl RecoveryReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn confusion_csv(&self) -> String {
        matrix_csv(&self.confusion, |v| v.to_string())
    }

    /// Empty cells are written as empty fields.
    pub fn weight_csv(&self) -> String {
        matrix_csv(&self.weight_matrix, |v| v.map(|w| w.to_string()).unwrap_or_default())
    }
}

fn matrix_csv<T: Copy>(m: &[Vec<T>], fmt: impl Fn(T) -> String) -> String {
    let mut out = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn recovery_report(store: &TargetStore, clean_labels: &[usize]) -> Result<RecoveryReport> {
    let recovered = recovered_accuracy(store, clean_labels)?;
    let c = store.class_count();
    if let Some(&y) = clean_labels.iter().find(|&&y| y >= c) {
        return Err(Error::invalid(format!("label {y} outside {c} classes")));
    }
    let mut confusion = vec![vec![0usize; c]; c];
    let mut weight_sum = vec![vec![0.0f64; c]; c];
    for (i, &y) in clean_labels.iter().enumerate() {
        let r = argmax(store.row(i));
        confusion[y][r] += 1;
        weight_sum[y][r] += store.weight(i);
    }
    let weight_matrix = confusion
        .iter()
        .zip(&weight_sum)
        .map(|(counts, sums)| {
            counts
                .iter()
                .zip(sums)
                .map(|(&n, &s)| (n > 0).then(|| s / n as f64))
                .collect()
        })
        .collect();
    Ok(RecoveryReport {
        recovered_accuracy: recovered,
        confusion,
        weight_matrix,
    })
}

pub const BASE_WIDTH: usize = 64;

/// Warm-up length and momentum scaled to model width: with
/// `r = base_width / width`, `E_s = round(40 r)` and `alpha = 0.9^(1/r)`.
pub fn capacity_sweep_params(width: usize, base_width: usize) -> Result<(usize, f64)> {
    if width == 0 || base_width == 0 {
        return Err(Error::invalid("widths must be at least 1"));
    }
    let r = base_width as f64 / width as f64;
    Ok(((40.0 * r).round() as usize, 0.9f64.powf(1.0 / r)))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EarlyStop {
    pub epoch: usize,
    pub noisy_val_accuracy: f64,
    pub clean_accuracy: f64,
}

/// Picks the epoch with the best noisy-validation accuracy (earliest on
/// ties) and reports its clean accuracy.
pub fn early_stop_select(records: &[EpochRecord]) -> Result<EarlyStop> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("early stopping needs at least one record"))?;
    let best = records
        .iter()
        .fold(first, |best, r| if r.acc_noisy_val > best.acc_noisy_val { r } else { best });
    Ok(EarlyStop {
        epoch: best.epoch,
        noisy_val_accuracy: best.acc_noisy_val,
        clean_accuracy: best.acc_clean_val,
    })
}
