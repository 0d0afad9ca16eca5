//! ℓ∞ PGD attacks, the TRADES objective with a soft-target natural term,
//! and robust-accuracy evaluation.
//!
//! The attack starts from a uniform random point in the ε-ball, takes signed
//! gradient ascent steps projected back onto the ball ∩ pixel bounds, and
//! returns the iterate with the highest objective. The unperturbed input is
//! always one of the candidates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::grad::Objective;
use crate::loss::{kl_rows, mean_kl_grad, sat_loss_grad};
use crate::mlp::{Gradients, Mlp};
use crate::ops::{argmax, clamped_ln, softmax};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttackSpec {
    pub epsilon: f64,
    pub step_size: f64,
    pub steps: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for AttackSpec {
    /// PGD-20 at ε = 0.031 with step 0.007 on `[0, 1]` pixels.
    fn default() -> Self {
        AttackSpec {
            epsilon: 0.031,
            step_size: 0.007,
            steps: 20,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

impl AttackSpec {
    /// The ten-step inner maximisation used during adversarial training.
    pub fn training_default() -> Self {
        AttackSpec {
            steps: 10,
            ..AttackSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid("attack epsilon must be nonnegative"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("attack needs at least one step"));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::invalid("attack step size must be positive"));
        }
        if !(self.lo <= self.hi) {
            return Err(Error::invalid("attack bounds are empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TradesConfig {
    /// Coefficient on the KL robustness term (`1 / λ`).
    pub inv_lambda: f64,
    pub attack: AttackSpec,
}

impl Default for TradesConfig {
    fn default() -> Self {
        TradesConfig {
            inv_lambda: 6.0,
            attack: AttackSpec::training_default(),
        }
    }
}

impl TradesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inv_lambda >= 0.0) {
            return Err(Error::invalid("inv_lambda must be nonnegative"));
        }
        self.attack.validate()
    }
}

/// What the attack maximises, per sample.
#[derive(Debug, Clone, Copy)]
pub enum AttackObjective<'a> {
    /// Cross entropy against class labels.
    CrossEntropy(&'a [usize]),
    /// `KL(reference || p(x̃))` against fixed reference probabilities.
    Kl(&'a Tensor),
}

/// Adversarial batch with per-sample objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub adversarial: Tensor,
    pub objective: Vec<f64>,
    /// Objective at the unperturbed input.
    pub start_objective: Vec<f64>,
}

/// Derives the random-start stream of one sample.
pub fn sample_stream(key: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(sample as u64);
    rng
}

/// Per-sample objective values and their gradient with respect to the logits.
fn objective_and_grad(objective: AttackObjective<'_>, logits: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let probs = softmax(logits)?;
    let m = probs.rows();
    let mut grad = probs.clone();
    let values = match objective {
        AttackObjective::CrossEntropy(labels) => {
            let mut v = Vec::with_capacity(m);
            for (i, &y) in labels.iter().enumerate() {
                v.push(-clamped_ln(probs.row(i)[y]));
                grad.row_mut(i)[y] -= 1.0;
            }
            v
        }
        AttackObjective::Kl(reference) => {
            for (g, r) in grad.data_mut().iter_mut().zip(reference.data()) {
                *g -= r;
            }
            kl_rows(reference, &probs)?
        }
    };
    Ok((values, grad))
}

fn check_objective(objective: AttackObjective<'_>, m: usize, width: usize) -> Result<()> {
    match objective {
        AttackObjective::CrossEntropy(labels) => {
            if labels.len() != m || labels.iter().any(|&y| y >= width) {
                return Err(Error::invalid("attack labels do not match the batch"));
            }
        }
        AttackObjective::Kl(reference) => {
            if reference.shape() != [m, width] {
                return Err(Error::invalid("attack reference does not match the batch"));
            }
        }
    }
    Ok(())
}

/// Projected gradient ascent within `B∞(x, ε) ∩ [lo, hi]^d`.
///
/// `sample_ids` key the per-sample random starts, so a sample receives the
/// same start no matter which batch it lands in.
pub fn pgd_attack(
    model: &Mlp,
    x: &Tensor,
    objective: AttackObjective<'_>,
    spec: &AttackSpec,
    rng_key: u64,
    sample_ids: &[usize],
) -> Result<AttackOutcome> {
    spec.validate()?;
    let m = x.rows();
    if sample_ids.len() != m {
        return Err(Error::invalid("one sample id per attacked row is required"));
    }
    check_objective(objective, m, model.spec().output_dim())?;
    if x.data().iter().any(|&v| v < spec.lo || v > spec.hi) {
        return Err(Error::invalid("attack input lies outside the pixel bounds"));
    }

    let (start_objective, _) = objective_and_grad(objective, &model.forward(x)?)?;
    if spec.epsilon == 0.0 {
        return Ok(AttackOutcome {
            adversarial: x.clone(),
            objective: start_objective.clone(),
            start_objective,
        });
    }

    let d = x.cols();
    let lower: Vec<f64> = x.data().iter().map(|&v| (v - spec.epsilon).max(spec.lo)).collect();
    let upper: Vec<f64> = x.data().iter().map(|&v| (v + spec.epsilon).min(spec.hi)).collect();
    let project = |data: &mut [f64]| {
        for ((v, &lo), &hi) in data.iter_mut().zip(&lower).zip(&upper) {
            *v = v.clamp(lo, hi);
        }
    };

    let mut current = x.clone();
    for (i, &id) in sample_ids.iter().enumerate() {
        let mut rng = sample_stream(rng_key, id);
        for v in current.row_mut(i) {
            *v += rng.random_range(-spec.epsilon..=spec.epsilon);
        }
    }
    project(current.data_mut());

    let mut best = x.clone();
    let mut best_value = start_objective.clone();
    for step in 0..=spec.steps {
        let cache = model.forward_cached(&current)?;
        let (values, grad_logits) = objective_and_grad(objective, cache.logits())?;
        for i in 0..m {
            if values[i] > best_value[i] {
                best_value[i] = values[i];
                best.row_mut(i).copy_from_slice(current.row(i));
            }
        }
        if step == spec.steps {
            break;
        }
        let (_, input_grad) = model.backward(&cache, &grad_logits, true)?;
        let input_grad = input_grad.expect("input gradient requested");
        for (v, g) in current.data_mut().iter_mut().zip(input_grad.data()) {
            *v += spec.step_size * sign(*g);
        }
        project(current.data_mut());
    }
    debug_assert_eq!(best.cols(), d);
    Ok(AttackOutcome {
        adversarial: best,
        objective: best_value,
        start_objective,
    })
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The outer TRADES objective on a fixed adversarial batch:
/// `sat_loss(p(x), t, w) + inv_lambda * mean_i KL(p(x_i) || p(x̃_i))`.
///
/// The adversarial inputs are constants, so gradients flow through both
/// forward passes but not through the attack.
pub struct TradesObjective<'a> {
    pub inputs: &'a Tensor,
    pub adversarial: &'a Tensor,
    pub targets: &'a Tensor,
    pub weights: &'a [f64],
    pub inv_lambda: f64,
}

impl TradesObjective<'_> {
    fn parts(&self, model: &Mlp) -> Result<(f64, Gradients)> {
        let clean = model.forward_cached(self.inputs)?;
        let adv = model.forward_cached(self.adversarial)?;
        let p = softmax(clean.logits())?;
        let q = softmax(adv.logits())?;
        let natural = sat_loss_grad(&p, self.targets, self.weights)?;
        let (kl, grad_p, grad_q) = mean_kl_grad(&p, &q, self.inv_lambda)?;
        let mut grad_clean = natural.grad;
        for (g, k) in grad_clean.data_mut().iter_mut().zip(grad_p.data()) {
            *g += k;
        }
        let (mut grads, _) = model.backward(&clean, &grad_clean, false)?;
        if self.inv_lambda != 0.0 {
            let (adv_grads, _) = model.backward(&adv, &grad_q, false)?;
            grads.add_assign(&adv_grads);
        }
        Ok((natural.value + kl, grads))
    }
}

impl Objective for TradesObjective<'_> {
    fn value(&self, model: &Mlp) -> Result<f64> {
        let p = softmax(&model.forward(self.inputs)?)?;
        let natural = sat_loss_grad(&p, self.targets, self.weights)?.value;
        if self.inv_lambda == 0.0 {
            return Ok(natural);
        }
        let q = softmax(&model.forward(self.adversarial)?)?;
        let kl = kl_rows(&p, &q)?;
        Ok(natural + self.inv_lambda * kl.iter().sum::<f64>() / kl.len() as f64)
    }

    fn value_and_grad(&self, model: &Mlp) -> Result<(f64, Gradients)> {
        self.parts(model)
    }
}

/// Generates the KL-maximising adversarial batch for `x`.
pub fn trades_adversarial(
    model: &Mlp,
    x: &Tensor,
    attack: &AttackSpec,
    rng_key: u64,
    sample_ids: &[usize],
) -> Result<Tensor> {
    let reference = softmax(&model.forward(x)?)?;
    Ok(pgd_attack(model, x, AttackObjective::Kl(&reference), attack, rng_key, sample_ids)?.adversarial)
}

/// TRADES loss with the soft-target natural term: attacks `x` under the KL
/// objective, then evaluates the outer objective.
pub fn trades_sat_loss(
    model: &Mlp,
    x: &Tensor,
    targets: &Tensor,
    weights: &[f64],
    cfg: &TradesConfig,
    rng_key: u64,
) -> Result<f64> {
    cfg.validate()?;
    let ids: Vec<usize> = (0..x.rows()).collect();
    let adversarial = trades_adversarial(model, x, &cfg.attack, rng_key, &ids)?;
    TradesObjective {
        inputs: x,
        adversarial: &adversarial,
        targets,
        weights,
        inv_lambda: cfg.inv_lambda,
    }
    .value(model)
}

/// Clean and robust accuracy against the clean labels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RobustReport {
    pub clean_accuracy: f64,
    pub robust_accuracy: f64,
}

/// Evaluates `1/n * sum 1{argmax p(x̃_i) = y_i}` under a cross-entropy PGD
/// attack on the clean inputs.
///
/// A sample only counts as robust when both `x̃_i` and the unperturbed
/// `x_i` are classified correctly; the unperturbed input is a feasible
/// perturbation, so this is the attack's best iterate by misclassification.
/// Models with an abstention slot are scored on their first `c` outputs.
pub fn robust_accuracy(
    model: &Mlp,
    eval: &LabeledDataset,
    spec: &AttackSpec,
    rng_key: u64,
) -> Result<RobustReport> {
    spec.validate()?;
    let n = eval.len();
    if n == 0 {
        return Err(Error::invalid("robust accuracy needs a nonempty dataset"));
    }
    let classes = eval.class_count();
    let labels = eval.clean_labels();
    let mut clean_hits = 0usize;
    let mut robust_hits = 0usize;
    const CHUNK: usize = 512;
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let ids: Vec<usize> = (start..end).collect();
        let x = eval.clean_inputs().slice_rows(start, end);
        let y = &labels[start..end];
        let out = pgd_attack(model, &x, AttackObjective::CrossEntropy(y), spec, rng_key, &ids)?;
        let clean_logits = model.forward(&x)?;
        let adv_logits = model.forward(&out.adversarial)?;
        for (i, &yi) in y.iter().enumerate() {
            let clean_ok = argmax(&clean_logits.row(i)[..classes]) == yi;
            let adv_ok = argmax(&adv_logits.row(i)[..classes]) == yi;
            clean_hits += usize::from(clean_ok);
            robust_hits += usize::from(clean_ok && adv_ok);
        }
    }
    Ok(RobustReport {
        clean_accuracy: clean_hits as f64 / n as f64,
        robust_accuracy: robust_hits as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::{finite_diff_check, FiniteDiff};
    use crate::mlp::MlpSpec;

    fn batch(seed: u64, m: usize, d: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[m, d], (0..m * d).map(|_| rng.random_range(0.1..0.9)).collect()).unwrap()
    }

    fn linear_model(w: [[f64; 3]; 2]) -> Mlp {
        let spec = MlpSpec::new(3, vec![], 2);
        Mlp::from_params(
            spec,
            vec![
                Tensor::from_rows(&[w[0].to_vec(), w[1].to_vec()]).unwrap(),
                Tensor::zeros(&[2]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_radius_is_identity() {
        let model = Mlp::new(MlpSpec::new(4, vec![6], 3), 1).unwrap();
        let x = batch(2, 5, 4);
        let labels = [0, 1, 2, 0, 1];
        let spec = AttackSpec { epsilon: 0.0, ..AttackSpec::default() };
        let out = pgd_attack(&model, &x, AttackObjective::CrossEntropy(&labels), &spec, 0, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(out.adversarial, x);
        assert_eq!(out.objective, out.start_objective);
    }

    #[test]
    fn linear_model_single_step_matches_closed_form() {
        // logits = W x; the cross-entropy gradient in x for label 0 is
        // (p0 - 1) w0 + p1 w1 = p1 (w1 - w0), so its sign is sign(w1 - w0).
        let w = [[0.5, -1.0, 0.2], [-0.5, 1.0, 0.6]];
        let model = linear_model(w);
        let x = Tensor::from_rows(&[vec![0.5, 0.5, 0.5]]).unwrap();
        let spec = AttackSpec {
            epsilon: 0.1,
            step_size: 0.2,
            steps: 1,
            lo: 0.0,
            hi: 1.0,
        };
        let out = pgd_attack(&model, &x, AttackObjective::CrossEntropy(&[0]), &spec, 3, &[0]).unwrap();
        // A 2ε step lands on the ball's face from any random start, and that face
        // maximises the margin (w1 - w0)·x, so it is also the best iterate.
        let expected: Vec<f64> = (0..3)
            .map(|j| (0.5 + 0.1 * (w[1][j] - w[0][j]).signum()).clamp(0.4, 0.6))
            .collect();
        for (a, b) in out.adversarial.row(0).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn outputs_are_feasible_and_no_worse_than_start() {
        let model = Mlp::new(MlpSpec::new(6, vec![10], 3), 4).unwrap();
        let mut x = batch(5, 20, 6);
        x.data_mut()[0] = 0.0;
        x.data_mut()[1] = 1.0;
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let spec = AttackSpec { epsilon: 0.2, step_size: 0.05, steps: 7, lo: 0.0, hi: 1.0 };
        let ids: Vec<usize> = (0..20).collect();
        let out = pgd_attack(&model, &x, AttackObjective::CrossEntropy(&labels), &spec, 9, &ids).unwrap();
        for (a, b) in out.adversarial.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= spec.epsilon + 1e-12);
            assert!((0.0..=1.0).contains(a));
        }
        for (v, s) in out.objective.iter().zip(&out.start_objective) {
            assert!(v >= s);
        }
    }

    #[test]
    fn rejects_inputs_outside_bounds() {
        let model = Mlp::new(MlpSpec::new(2, vec![], 2), 0).unwrap();
        let x = Tensor::from_rows(&[vec![1.5, 0.0]]).unwrap();
        let r = pgd_attack(&model, &x, AttackObjective::CrossEntropy(&[0]), &AttackSpec::default(), 0, &[0]);
        assert!(r.is_err());
    }

    #[test]
    fn trades_reductions() {
        let model = Mlp::new(MlpSpec::new(4, vec![5], 3), 6).unwrap();
        let x = batch(7, 6, 4);
        let mut targets = Tensor::zeros(&[6, 3]);
        for i in 0..6 {
            targets.row_mut(i)[i % 3] = 1.0;
        }
        let weights = vec![1.0; 6];
        let natural = {
            let p = softmax(&model.forward(&x).unwrap()).unwrap();
            sat_loss_grad(&p, &targets, &weights).unwrap().value
        };
        let no_kl = TradesConfig { inv_lambda: 0.0, ..TradesConfig::default() };
        assert_eq!(trades_sat_loss(&model, &x, &targets, &weights, &no_kl, 1).unwrap(), natural);
        let no_radius = TradesConfig {
            attack: AttackSpec { epsilon: 0.0, ..AttackSpec::training_default() },
            ..TradesConfig::default()
        };
        assert_eq!(trades_sat_loss(&model, &x, &targets, &weights, &no_radius, 1).unwrap(), natural);
        let full = trades_sat_loss(&model, &x, &targets, &weights, &TradesConfig::default(), 1).unwrap();
        assert!(full >= natural);
    }

    #[test]
    fn trades_gradient_with_fixed_adversary() {
        let model = Mlp::new(MlpSpec::new(4, vec![6], 3), 8).unwrap();
        let x = batch(9, 5, 4);
        let adv = batch(10, 5, 4);
        let targets = Tensor::from_rows(&[
            vec![0.8, 0.1, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.3, 0.3, 0.4],
            vec![1.0, 0.0, 0.0],
            vec![0.05, 0.05, 0.9],
        ])
        .unwrap();
        let weights = [0.8, 0.7, 0.4, 1.0, 0.9];
        let obj = TradesObjective {
            inputs: &x,
            adversarial: &adv,
            targets: &targets,
            weights: &weights,
            inv_lambda: 6.0,
        };
        let r = finite_diff_check(&model, &obj, FiniteDiff::default()).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn constant_model_is_attack_invariant() {
        let spec = MlpSpec::new(3, vec![], 2);
        let model = Mlp::from_params(
            spec,
            vec![Tensor::zeros(&[2, 3]), Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap()],
        )
        .unwrap();
        let x = batch(11, 40, 3);
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i % 4 == 0)).collect();
        let ds = LabeledDataset::new(x, labels.clone(), 2).unwrap();
        let r = robust_accuracy(&model, &ds, &AttackSpec::default(), 0).unwrap();
        let majority = labels.iter().filter(|&&y| y == 1).count() as f64 / 40.0;
        assert_eq!(r.clean_accuracy, majority);
        assert_eq!(r.robust_accuracy, majority);
    }
}
