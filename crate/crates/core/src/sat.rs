//! Per-sample moving-average targets and confidence weights.
//!
//! Every training sample owns a soft target `t_i` on the probability simplex,
//! initialised to its (possibly noisy) one-hot label. After the warm-up
//! epochs each visit blends in the model's current prediction,
//! `t_i <- alpha * t_i + (1 - alpha) * p_i`, and the sample's loss weight is
//! its target's largest entry.

use std::io::{Read, Write};

use crate::data::{ByteReader, LabeledDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Tolerance on the simplex check applied to `ema_update` arguments.
pub const SIMPLEX_INPUT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SatConfig {
    /// Targets stay frozen for epochs `1..=start_epoch`.
    pub start_epoch: usize,
    /// Weight kept on the previous target at each update.
    pub momentum: f64,
}

impl Default for SatConfig {
    fn default() -> Self {
        SatConfig {
            start_epoch: 60,
            momentum: 0.9,
        }
    }
}

impl SatConfig {
    /// Warm-up and momentum used for abstention training.
    pub fn selective_default() -> Self {
        SatConfig {
            start_epoch: 0,
            momentum: 0.99,
        }
    }

    /// Warm-up and momentum used with adversarial training.
    pub fn adversarial_default() -> Self {
        SatConfig {
            start_epoch: 70,
            momentum: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "target momentum must lie in [0, 1], got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// Whether targets move during `epoch` (1-based).
    pub fn updates_at(&self, epoch: usize) -> bool {
        epoch > self.start_epoch
    }
}

fn check_simplex(v: &[f64], what: &str, tol: f64) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&x| !(x >= -tol)) || (sum - 1.0).abs() > tol {
        return Err(Error::invalid(format!(
            "{what} is not on the probability simplex (sum {sum})"
        )));
    }
    Ok(())
}

/// `alpha * t + (1 - alpha) * p` for two probability vectors.
pub fn ema_update(t: &[f64], p: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if t.len() != p.len() {
        return Err(Error::invalid("target and prediction lengths differ"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("momentum {alpha} outside [0, 1]")));
    }
    check_simplex(t, "target", SIMPLEX_INPUT_TOL)?;
    check_simplex(p, "prediction", SIMPLEX_INPUT_TOL)?;
    let mut out = t.to_vec();
    blend(&mut out, p, alpha);
    Ok(out)
}

fn blend(t: &mut [f64], p: &[f64], alpha: f64) {
    let keep = 1.0 - alpha;
    for (tj, &pj) in t.iter_mut().zip(p) {
        *tj = alpha * *tj + keep * pj;
    }
}

/// Largest target entry: the sample's labelling confidence.
pub fn sample_weight(t: &[f64]) -> f64 {
    t.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetStore {
    targets: Tensor,
    /// Last epoch in which any row moved; 0 while frozen.
    pub last_updated_epoch: usize,
}

impl TargetStore {
    /// Copies the dataset's noisy one-hot labels.
    pub fn init(ds: &LabeledDataset) -> Self {
        TargetStore {
            targets: ds.noisy_labels().clone(),
            last_updated_epoch: 0,
        }
    }

    pub fn from_targets(targets: Tensor, last_updated_epoch: usize) -> Result<Self> {
        if targets.shape().len() != 2 {
            return Err(Error::invalid("targets must be a matrix"));
        }
        Ok(TargetStore {
            targets,
            last_updated_epoch,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_count(&self) -> usize {
        self.targets.cols()
    }

    pub fn targets(&self) -> &Tensor {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.targets.row(i)
    }

    pub fn weight(&self, i: usize) -> f64 {
        sample_weight(self.row(i))
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Blends a prediction into sample `i`'s target.
    ///
    /// The prediction is assumed to come from a softmax; use [`ema_update`]
    /// for checked arithmetic on arbitrary vectors.
    pub fn update(&mut self, i: usize, prediction: &[f64], alpha: f64, epoch: usize) {
        blend(self.targets.row_mut(i), prediction, alpha);
        self.last_updated_epoch = epoch;
    }

    /// Worst deviation from the simplex over all rows: the larger of
    /// `|sum - 1|` and the most negative entry's magnitude.
    pub fn simplex_violation(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let row = self.row(i);
                let sum_err = (row.iter().sum::<f64>() - 1.0).abs();
                let neg = row.iter().fold(0.0_f64, |m, &v| m.max(-v));
                sum_err.max(neg)
            })
            .fold(0.0, f64::max)
    }

    const MAGIC: &'static [u8; 4] = b"SATT";
    const VERSION: u32 = 1;

    /// `"SATT" | version u32 | n u64 | c u64 | epoch u64 | f64[n*c]`, little-endian.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        for v in [self.len(), self.class_count(), self.last_updated_epoch] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.targets.len() * 8);
        for v in self.targets.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = ByteReader::new(r);
        if r.bytes(4)? != Self::MAGIC {
            return Err(Error::format(0, "target checkpoint magic mismatch"));
        }
        let version = r.u32_le()?;
        if version != Self::VERSION {
            return Err(Error::format(4, format!("unsupported target checkpoint version {version}")));
        }
        let n = r.u64_le()? as usize;
        let c = r.u64_le()? as usize;
        let epoch = r.u64_le()? as usize;
        let mut data = Vec::with_capacity(n * c);
        for _ in 0..n * c {
            data.push(r.f64_le()?);
        }
        r.expect_end()?;
        TargetStore::from_targets(Tensor::from_vec(&[n, c], data)?, epoch)
    }
}
