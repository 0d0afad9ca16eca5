//! Parameter gradients of scalar objectives and a finite-difference oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::LossGrad;
use crate::mlp::{Gradients, Mlp};
use crate::ops::softmax;
use crate::tensor::Tensor;

/// A scalar function of the model parameters.
pub trait Objective {
    fn value(&self, model: &Mlp) -> Result<f64>;

    fn value_and_grad(&self, model: &Mlp) -> Result<(f64, Gradients)>;
}

/// A loss over the softmax of one forward pass on a fixed batch.
pub struct ProbLoss<'a, F> {
    pub inputs: &'a Tensor,
    pub loss: F,
}

impl<'a, F> ProbLoss<'a, F>
where
    F: Fn(&Tensor) -> Result<LossGrad>,
{
    pub fn new(inputs: &'a Tensor, loss: F) -> Self {
        ProbLoss { inputs, loss }
    }
}

impl<F> Objective for ProbLoss<'_, F>
where
    F: Fn(&Tensor) -> Result<LossGrad>,
{
    fn value(&self, model: &Mlp) -> Result<f64> {
        let probs = softmax(&model.forward(self.inputs)?)?;
        Ok((self.loss)(&probs)?.value)
    }

    fn value_and_grad(&self, model: &Mlp) -> Result<(f64, Gradients)> {
        let cache = model.forward_cached(self.inputs)?;
        let probs = softmax(cache.logits())?;
        let lg = (self.loss)(&probs)?;
        let (grads, _) = model.backward(&cache, &lg.grad, false)?;
        Ok((lg.value, grads))
    }
}

/// Loss and parameter gradients, rejecting non-finite results with the
/// offending batch index attached.
pub fn grad(model: &Mlp, objective: &dyn Objective, batch: usize) -> Result<(f64, Gradients)> {
    let (value, grads) = objective.value_and_grad(model).map_err(|e| match e {
        Error::NonFinite { message, .. } => Error::NonFinite { batch, message },
        other => other,
    })?;
    if !value.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite {
            batch,
            message: format!("loss {value} or its gradient is not finite"),
        });
    }
    Ok((value, grads))
}

/// Entries whose magnitude is below this are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// Options for [`finite_diff_check`].
#[derive(Debug, Clone, Copy)]
pub struct FiniteDiff {
    pub step: f64,
    /// Number of parameter entries to probe; all entries when larger than the model.
    pub samples: usize,
    pub seed: u64,
}

impl Default for FiniteDiff {
    fn default() -> Self {
        FiniteDiff {
            step: 1e-5,
            samples: 200,
            seed: 0,
        }
    }
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffReport {
    pub max_relative_error: f64,
    /// Largest magnitude seen on either side, for spotting all-zero probes.
    pub max_gradient: f64,
    pub probed: usize,
}

/// Compares analytic gradients with central differences
/// `(f(θ + h) - f(θ - h)) / 2h` on a seeded subset of parameter entries.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, floor)`.
pub fn finite_diff_check(
    model: &Mlp,
    objective: &dyn Objective,
    opts: FiniteDiff,
) -> Result<FiniteDiffReport> {
    if !(opts.step > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (_, analytic) = objective.value_and_grad(model)?;
    let mut positions = Vec::new();
    for (t, p) in model.params().iter().enumerate() {
        for k in 0..p.len() {
            positions.push((t, k));
        }
    }
    if opts.samples < positions.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        // Partial Fisher-Yates: the first `samples` slots become the probe set.
        for i in 0..opts.samples {
            let j = rng.random_range(i..positions.len());
            positions.swap(i, j);
        }
        positions.truncate(opts.samples);
    }

    let mut probe = model.clone();
    let mut report = FiniteDiffReport {
        max_relative_error: 0.0,
        max_gradient: 0.0,
        probed: positions.len(),
    };
    for (t, k) in positions {
        let original = probe.params()[t].data()[k];
        probe.params_mut()[t].data_mut()[k] = original + opts.step;
        let plus = objective.value(&probe)?;
        probe.params_mut()[t].data_mut()[k] = original - opts.step;
        let minus = objective.value(&probe)?;
        probe.params_mut()[t].data_mut()[k] = original;

        let numeric = (plus - minus) / (2.0 * opts.step);
        let exact = analytic.tensors[t].data()[k];
        let scale = exact.abs().max(numeric.abs());
        let err = (exact - numeric).abs() / scale.max(RELATIVE_ERROR_FLOOR);
        report.max_relative_error = report.max_relative_error.max(err);
        report.max_gradient = report.max_gradient.max(scale);
    }
    Ok(report)
}
