//! Labeled datasets with hidden clean-label bookkeeping.
//!
//! A [`LabeledDataset`] carries what a learner may see (inputs and noisy
//! one-hot labels) next to evaluation-only metadata: the clean labels, the
//! original inputs when input corruption replaced them, and the per-sample
//! corruption mask.

mod corrupt;
mod formats;
mod synthetic;

pub use corrupt::{corrupt, CorruptionScheme, CorruptionSpec};
pub use formats::{
    load_cifar_binary, load_idx, load_snapshot, parse_cifar_binary, parse_idx, read_snapshot,
    save_snapshot, write_snapshot,
};
pub(crate) use formats::ByteReader;
pub use synthetic::{gen_synthetic, two_moons, Generator, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Tensor,
    noisy_labels: Tensor,
    noisy_indices: Vec<usize>,
    clean_labels: Vec<usize>,
    corrupted_mask: Vec<bool>,
    class_count: usize,
    /// Original inputs, present only when input corruption changed some rows.
    clean_inputs: Option<Tensor>,
}

pub(crate) fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &y) in labels.iter().enumerate() {
        t.row_mut(i)[y] = 1.0;
    }
    t
}

impl LabeledDataset {
    /// An uncorrupted dataset: noisy labels equal the given clean labels.
    pub fn new(inputs: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::invalid("dataset inputs must be a matrix"));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if class_count < 2 {
            return Err(Error::invalid("a dataset needs at least two classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::invalid(format!("label {bad} out of range for {class_count} classes")));
        }
        let n = labels.len();
        Ok(LabeledDataset {
            noisy_labels: one_hot(&labels, class_count),
            noisy_indices: labels.clone(),
            clean_labels: labels,
            corrupted_mask: vec![false; n],
            class_count,
            inputs,
            clean_inputs: None,
        })
    }

    pub(crate) fn from_parts(
        inputs: Tensor,
        noisy_indices: Vec<usize>,
        clean_labels: Vec<usize>,
        corrupted_mask: Vec<bool>,
        class_count: usize,
        clean_inputs: Option<Tensor>,
    ) -> Self {
        LabeledDataset {
            noisy_labels: one_hot(&noisy_indices, class_count),
            noisy_indices,
            clean_labels,
            corrupted_mask,
            class_count,
            inputs,
            clean_inputs,
        }
    }

    pub fn len(&self) -> usize {
        self.clean_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Inputs the learner trains on.
    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    /// Original inputs before any input corruption (evaluation only).
    pub fn clean_inputs(&self) -> &Tensor {
        self.clean_inputs.as_ref().unwrap_or(&self.inputs)
    }

    pub fn has_input_corruption(&self) -> bool {
        self.clean_inputs.is_some()
    }

    /// One-hot training labels.
    pub fn noisy_labels(&self) -> &Tensor {
        &self.noisy_labels
    }

    pub fn noisy_indices(&self) -> &[usize] {
        &self.noisy_indices
    }

    /// Ground-truth labels (evaluation only).
    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn corrupted_mask(&self) -> &[bool] {
        &self.corrupted_mask
    }

    /// Fraction of samples the corruption procedure did not select.
    pub fn clean_fraction(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let clean = self.corrupted_mask.iter().filter(|&&m| !m).count();
        clean as f64 / self.len() as f64
    }

    /// Fraction of samples whose training label equals the clean label.
    pub fn label_agreement(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let same = self
            .noisy_indices
            .iter()
            .zip(&self.clean_labels)
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.len() as f64
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset::from_parts(
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.noisy_indices[i]).collect(),
            indices.iter().map(|&i| self.clean_labels[i]).collect(),
            indices.iter().map(|&i| self.corrupted_mask[i]).collect(),
            self.class_count,
            self.clean_inputs.as_ref().map(|c| c.select_rows(indices)),
        )
    }
}

/// Splits off the first `train_count` samples, in order, as the training set.
pub fn split_train_val(
    ds: &LabeledDataset,
    train_count: usize,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if train_count >= ds.len() {
        return Err(Error::invalid(format!(
            "train_count {train_count} must be smaller than dataset size {}",
            ds.len()
        )));
    }
    let train: Vec<usize> = (0..train_count).collect();
    let val: Vec<usize> = (train_count..ds.len()).collect();
    Ok((ds.select(&train), ds.select(&val)))
}
