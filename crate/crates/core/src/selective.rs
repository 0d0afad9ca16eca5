//! Prediction with an abstention option: thresholding the abstention
//! probability, calibrating the threshold to a target coverage, and
//! risk-coverage tables.

use std::fmt::Write as _;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::ops::{argmax, softmax};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Abstain,
    Class(usize),
}

/// Abstention probabilities `g(x)` and class predictions over the first `c`
/// outputs, for every row of `x`.
pub fn scores_and_classes(model: &Mlp, x: &Tensor) -> Result<(Vec<f64>, Vec<usize>)> {
    if !model.spec().abstain {
        return Err(Error::invalid("model has no abstention output"));
    }
    let probs = softmax(&model.forward(x)?)?;
    let c = model.spec().num_classes;
    Ok((0..probs.rows())
        .map(|i| {
            let row = probs.row(i);
            (row[c], argmax(&row[..c]))
        })
        .unzip())
}

/// Abstains iff `g(x) > tau`; otherwise predicts the best real class.
pub fn selective_predict(model: &Mlp, x: &Tensor, tau: f64) -> Result<Vec<Prediction>> {
    let (g, classes) = scores_and_classes(model, x)?;
    Ok(g.iter()
        .zip(classes)
        .map(|(&g, k)| if g > tau { Prediction::Abstain } else { Prediction::Class(k) })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub tau: f64,
    /// Fraction of scores with `g <= tau`.
    pub coverage: f64,
}

/// Smallest threshold whose coverage reaches `target`: the score at rank
/// `ceil(target * n)` in ascending order.
pub fn calibrate_threshold(scores: &[f64], target: f64) -> Result<Calibration> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot calibrate on an empty score set"));
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::invalid(format!("coverage target {target} outside (0, 1]")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("abstention scores contain NaN"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Absorb rounding in target * n so that e.g. 0.8 * 10 selects rank 8.
    let rank = ((target * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let tau = sorted[rank - 1];
    Ok(Calibration {
        tau,
        coverage: coverage_at(scores, tau),
    })
}

pub fn coverage_at(scores: &[f64], tau: f64) -> f64 {
    scores.iter().filter(|&&g| g <= tau).count() as f64 / scores.len() as f64
}

/// Misclassification rate among covered samples; `None` when nothing is covered.
pub fn selective_error(scores: &[f64], predicted: &[usize], labels: &[usize], tau: f64) -> Option<f64> {
    let (covered, wrong) = scores
        .iter()
        .zip(predicted.iter().zip(labels))
        .filter(|(&g, _)| g <= tau)
        .fold((0usize, 0usize), |(n, w), (_, (p, y))| (n + 1, w + usize::from(p != y)));
    (covered > 0).then(|| wrong as f64 / covered as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoveragePoint {
    pub coverage_target: f64,
    pub coverage: f64,
    pub tau: f64,
    /// `None` when no sample is covered.
    pub selective_error: Option<f64>,
}

/// Calibrates a threshold per target coverage on the evaluation set's clean
/// inputs and measures the error against its clean labels.
pub fn risk_coverage(model: &Mlp, eval: &LabeledDataset, coverages: &[f64]) -> Result<Vec<CoveragePoint>> {
    let (scores, predicted) = scores_and_classes(model, eval.clean_inputs())?;
    risk_coverage_from_scores(&scores, &predicted, eval.clean_labels(), coverages)
}

pub fn risk_coverage_from_scores(
    scores: &[f64],
    predicted: &[usize],
    labels: &[usize],
    coverages: &[f64],
) -> Result<Vec<CoveragePoint>> {
    if scores.len() != predicted.len() || scores.len() != labels.len() {
        return Err(Error::invalid("scores, predictions and labels differ in length"));
    }
    coverages
        .iter()
        .map(|&target| {
            let cal = calibrate_threshold(scores, target)?;
            Ok(CoveragePoint {
                coverage_target: target,
                coverage: cal.coverage,
                tau: cal.tau,
                selective_error: selective_error(scores, predicted, labels, cal.tau),
            })
        })
        .collect()
}

pub const RISK_COVERAGE_HEADER: &str = "coverage_target,coverage_achieved,tau,selective_error_pct";

/// Undefined errors are written as `undefined`.
pub fn risk_coverage_csv(points: &[CoveragePoint]) -> String {
    let mut out = format!("{RISK_COVERAGE_HEADER}\n");
    for p in points {
        let err = p
            .selective_error
            .map(|e| (100.0 * e).to_string())
            .unwrap_or_else(|| "undefined".into());
        let _ = writeln!(out, "{},{},{},{}", p.coverage_target, p.coverage, p.tau, err);
    }
    out
}
