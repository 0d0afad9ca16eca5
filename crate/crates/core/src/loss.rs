//! Losses over softmax probabilities, each paired with its gradient with
//! respect to the logits that produced those probabilities.
//!
//! Targets and weights are constants: no gradient flows through them.

use crate::error::{Error, Result};
use crate::ops::{clamped_ln, PROB_FLOOR};
use crate::tensor::Tensor;

/// Floor on soft targets inside the reverse cross-entropy logarithm.
pub const REVERSE_TARGET_FLOOR: f64 = 1e-4;

/// A loss value with `d loss / d logits`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Tensor,
}

/// Weights of the forward and reverse cross-entropy terms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceWeights {
    pub forward: f64,
    pub reverse: f64,
}

impl Default for SceWeights {
    fn default() -> Self {
        SceWeights {
            forward: 1.0,
            reverse: 0.1,
        }
    }
}

fn non_finite(what: &str) -> Error {
    Error::NonFinite {
        batch: 0,
        message: format!("{what} is not finite"),
    }
}

fn check_pair(probs: &Tensor, targets: &Tensor) -> Result<()> {
    if probs.shape() != targets.shape() || probs.shape().len() != 2 {
        return Err(Error::invalid(format!(
            "probability shape {:?} does not match target shape {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    if !probs.is_finite() {
        return Err(non_finite("probability"));
    }
    Ok(())
}

/// `sum_i coeff_i * sum_j -t_ij ln max(p_ij, floor)` and its logit gradient.
///
/// Entries clamped by the floor are constant in the logits, so they drop out
/// of the gradient: `g_ik = coeff_i * (p_ik * s_i - t_ik * [p_ik >= floor])`
/// with `s_i = sum_j t_ij * [p_ij >= floor]`.
fn weighted_soft_ce(probs: &Tensor, targets: &Tensor, coeffs: &[f64]) -> LossGrad {
    let mut grad = Tensor::zeros(probs.shape());
    let mut value = 0.0;
    for (i, &coeff) in coeffs.iter().enumerate() {
        let p = probs.row(i);
        let t = targets.row(i);
        let mut row_loss = 0.0;
        let mut active_mass = 0.0;
        for (&pj, &tj) in p.iter().zip(t) {
            row_loss -= tj * clamped_ln(pj);
            if pj >= PROB_FLOOR {
                active_mass += tj;
            }
        }
        value += coeff * row_loss;
        for ((g, &pj), &tj) in grad.row_mut(i).iter_mut().zip(p).zip(t) {
            let direct = if pj >= PROB_FLOOR { tj } else { 0.0 };
            *g = coeff * (pj * active_mass - direct);
        }
    }
    LossGrad { value, grad }
}

fn normalized_coeffs(weights: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(non_finite("sample weight total"));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Confidence-weighted soft-target cross entropy:
/// `-(1 / sum_i w_i) * sum_i w_i * sum_j t_ij ln p_ij`.
pub fn sat_loss(probs: &Tensor, targets: &Tensor, weights: &[f64]) -> Result<f64> {
    Ok(sat_loss_grad(probs, targets, weights)?.value)
}

pub fn sat_loss_grad(probs: &Tensor, targets: &Tensor, weights: &[f64]) -> Result<LossGrad> {
    check_pair(probs, targets)?;
    if weights.len() != probs.rows() {
        return Err(Error::invalid(format!(
            "{} weights for {} samples",
            weights.len(),
            probs.rows()
        )));
    }
    let coeffs = normalized_coeffs(weights)?;
    finite(weighted_soft_ce(probs, targets, &coeffs))
}

/// Mean cross entropy against one-hot labels.
pub fn erm_loss(probs: &Tensor, one_hot: &Tensor) -> Result<f64> {
    Ok(erm_loss_grad(probs, one_hot)?.value)
}

/// Uses the same arithmetic as [`sat_loss_grad`] with unit weights, so the
/// two agree bit-for-bit whenever the targets are one-hot.
pub fn erm_loss_grad(probs: &Tensor, one_hot: &Tensor) -> Result<LossGrad> {
    sat_loss_grad(probs, one_hot, &vec![1.0; probs.rows()])
}

/// Weighted symmetric cross entropy with the default `(1, 0.1)` term weights.
pub fn sce_sat_loss(probs: &Tensor, targets: &Tensor, weights: &[f64]) -> Result<f64> {
    Ok(sce_sat_loss_grad(probs, targets, weights, SceWeights::default())?.value)
}

/// Per sample `a * CE(t, p) + b * CE(p, t)`, with `ln t` floored at
/// [`REVERSE_TARGET_FLOOR`], combined under the same weight normalization as
/// [`sat_loss`].
pub fn sce_sat_loss_grad(
    probs: &Tensor,
    targets: &Tensor,
    weights: &[f64],
    sce: SceWeights,
) -> Result<LossGrad> {
    let forward = sat_loss_grad(probs, targets, weights)?;
    let coeffs = normalized_coeffs(weights)?;
    let mut value = sce.forward * forward.value;
    let mut grad = forward.grad;
    for g in grad.data_mut() {
        *g *= sce.forward;
    }
    if sce.reverse != 0.0 {
        for (i, &coeff) in coeffs.iter().enumerate() {
            let p = probs.row(i);
            let log_t: Vec<f64> = targets
                .row(i)
                .iter()
                .map(|&t| t.max(REVERSE_TARGET_FLOOR).ln())
                .collect();
            let mean_log_t: f64 = p.iter().zip(&log_t).map(|(pj, lt)| pj * lt).sum();
            value -= sce.reverse * coeff * mean_log_t;
            // d/dz_k of -sum_j p_j a_j is -p_k (a_k - sum_j p_j a_j).
            for ((g, &pk), &ak) in grad.row_mut(i).iter_mut().zip(p).zip(&log_t) {
                *g -= sce.reverse * coeff * pk * (ak - mean_log_t);
            }
        }
    }
    finite(LossGrad { value, grad })
}

/// Abstention loss over a `(c + 1)`-way head:
/// `-(1/m) * sum_i [t_i ln p_{i,y_i} + (1 - t_i) ln p_{i,c}]`, where `t_i`
/// is the moving-average target mass on the labeled class.
pub fn selective_loss(probs: &Tensor, true_class_target: &[f64], labels: &[usize]) -> Result<f64> {
    Ok(selective_loss_grad(probs, true_class_target, labels)?.value)
}

pub fn selective_loss_grad(
    probs: &Tensor,
    true_class_target: &[f64],
    labels: &[usize],
) -> Result<LossGrad> {
    let m = probs.rows();
    if true_class_target.len() != m || labels.len() != m {
        return Err(Error::invalid("selective loss inputs disagree on batch size"));
    }
    let width = probs.cols();
    if width < 3 {
        return Err(Error::invalid("selective head needs at least two classes plus abstention"));
    }
    let abstain = width - 1;
    // The loss is a soft cross entropy against u_i = t e_{y_i} + (1 - t) e_c.
    let mut mixed = Tensor::zeros(probs.shape());
    for i in 0..m {
        let y = labels[i];
        if y >= abstain {
            return Err(Error::invalid(format!("label {y} out of range for {abstain} classes")));
        }
        let t = true_class_target[i];
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::invalid(format!("target mass {t} outside [0, 1]")));
        }
        let row = mixed.row_mut(i);
        row[y] = t;
        row[abstain] = 1.0 - t;
    }
    check_pair(probs, &mixed)?;
    let coeffs = vec![1.0 / m as f64; m];
    finite(weighted_soft_ce(probs, &mixed, &coeffs))
}

/// Row-wise `KL(p || q) = sum_j p_j (ln p_j - ln q_j)` with both logarithms
/// floored at the probability floor.
pub fn kl_rows(p: &Tensor, q: &Tensor) -> Result<Vec<f64>> {
    check_pair(p, q)?;
    Ok((0..p.rows())
        .map(|i| {
            p.row(i)
                .iter()
                .zip(q.row(i))
                .map(|(&pj, &qj)| if pj > 0.0 { pj * (clamped_ln(pj) - clamped_ln(qj)) } else { 0.0 })
                .sum()
        })
        .collect())
}

/// `scale * mean_i KL(p_i || q_i)` with gradients for both the logits of `p`
/// and the logits of `q`.
pub fn mean_kl_grad(p: &Tensor, q: &Tensor, scale: f64) -> Result<(f64, Tensor, Tensor)> {
    let rows = kl_rows(p, q)?;
    let m = p.rows() as f64;
    let value = scale * rows.iter().sum::<f64>() / m;
    let c = scale / m;
    let mut grad_p = Tensor::zeros(p.shape());
    // The q-side term is the soft cross entropy of q against target p.
    let coeffs = vec![c; p.rows()];
    let grad_q = weighted_soft_ce(q, p, &coeffs).grad;
    for i in 0..p.rows() {
        let pr = p.row(i);
        let a: Vec<f64> = pr
            .iter()
            .zip(q.row(i))
            .map(|(&pj, &qj)| clamped_ln(pj) - clamped_ln(qj))
            .collect();
        let mean_a: f64 = pr.iter().zip(&a).map(|(pj, aj)| pj * aj).sum();
        for ((g, &pk), &ak) in grad_p.row_mut(i).iter_mut().zip(pr).zip(&a) {
            *g = c * pk * (ak - mean_a);
        }
    }
    if !value.is_finite() {
        return Err(non_finite("KL term"));
    }
    Ok((value, grad_p, grad_q))
}

fn finite(lg: LossGrad) -> Result<LossGrad> {
    if !lg.value.is_finite() {
        return Err(non_finite("loss"));
    }
    if !lg.grad.is_finite() {
        return Err(non_finite("loss gradient"));
    }
    Ok(lg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::softmax;

    fn row(v: &[f64]) -> Tensor {
        Tensor::from_vec(&[1, v.len()], v.to_vec()).unwrap()
    }

    fn probs_of(logits: &[f64]) -> Tensor {
        softmax(&row(logits)).unwrap()
    }

    #[test]
    fn one_hot_targets_reduce_to_mean_ce() {
        let p = Tensor::from_rows(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]]).unwrap();
        let y = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let want = -(0.7f64.ln() + 0.3f64.ln()) / 2.0;
        let sat = sat_loss_grad(&p, &y, &[1.0, 1.0]).unwrap();
        let erm = erm_loss_grad(&p, &y).unwrap();
        assert!((sat.value - want).abs() < 1e-15);
        assert_eq!(sat, erm);
    }

    #[test]
    fn soft_target_single_sample() {
        // Scalar oracle: p = softmax(2, 0); loss = -(0.95 ln p0 + 0.05 ln p1).
        let e2 = 2.0f64.exp();
        let (p0, p1) = (e2 / (e2 + 1.0), 1.0 / (e2 + 1.0));
        let oracle = -(0.95 * p0.ln() + 0.05 * p1.ln());
        assert!((oracle - 0.2269).abs() < 5e-5);
        let p = probs_of(&[2.0, 0.0]);
        let t = row(&[0.95, 0.05]);
        for w in [0.95, 0.3] {
            assert!((sat_loss(&p, &t, &[w]).unwrap() - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn duplicating_samples_keeps_loss() {
        let single_p = probs_of(&[2.0, 0.0]);
        let single_t = row(&[0.95, 0.05]);
        let one = sat_loss(&single_p, &single_t, &[0.95]).unwrap();
        let two = sat_loss(&single_p.select_rows(&[0, 0]), &single_t.select_rows(&[0, 0]), &[0.95, 0.95])
            .unwrap();
        assert!((one - two).abs() < 1e-15);

        let p = Tensor::from_rows(&[vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap();
        let t = Tensor::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let base = sat_loss(&p, &t, &[0.9, 0.7]).unwrap();
        let idx = [0, 1, 0, 1];
        let all = sat_loss(&p.select_rows(&idx), &t.select_rows(&idx), &[0.9, 0.7, 0.9, 0.7]).unwrap();
        assert!((all - base).abs() < 1e-15);
    }

    #[test]
    fn erm_extremes() {
        let p = row(&[1.0, 0.0, 0.0]);
        let y = row(&[1.0, 0.0, 0.0]);
        assert_eq!(erm_loss(&p, &y).unwrap(), 0.0);
        let c = 7;
        let u = Tensor::filled(&[1, c], 1.0 / c as f64);
        let mut y = Tensor::zeros(&[1, c]);
        y.data_mut()[3] = 1.0;
        assert!((erm_loss(&u, &y).unwrap() - (c as f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn sce_reduces_and_vanishes() {
        let p = Tensor::from_rows(&[vec![0.6, 0.4], vec![0.2, 0.8]]).unwrap();
        let t = Tensor::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let w = [0.9, 0.7];
        let no_reverse = SceWeights {
            forward: 1.0,
            reverse: 0.0,
        };
        assert_eq!(
            sce_sat_loss_grad(&p, &t, &w, no_reverse).unwrap(),
            sat_loss_grad(&p, &t, &w).unwrap()
        );
        let exact = row(&[0.0, 1.0]);
        assert_eq!(sce_sat_loss(&exact, &exact, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn sce_reverse_term_uses_floor() {
        let p = row(&[0.5, 0.5]);
        let t = row(&[1.0, 0.0]);
        let forward = sat_loss(&p, &t, &[1.0]).unwrap();
        let reverse = sce_sat_loss(&p, &t, &[1.0]).unwrap() - forward;
        let oracle = -0.1 * (0.5 * 1.0f64.ln() + 0.5 * 1e-4f64.ln());
        assert!((reverse - oracle).abs() < 1e-12);
        assert!((reverse - 0.4605).abs() < 5e-5);
    }

    #[test]
    fn selective_reductions() {
        let p = row(&[0.6, 0.1, 0.1, 0.2]);
        assert!((selective_loss(&p, &[1.0], &[0]).unwrap() + 0.6f64.ln()).abs() < 1e-15);
        assert!((selective_loss(&p, &[0.0], &[0]).unwrap() + 0.2f64.ln()).abs() < 1e-15);
        let half = selective_loss(&p, &[0.5], &[0]).unwrap();
        let oracle = -(0.5 * 0.6f64.ln() + 0.5 * 0.2f64.ln());
        assert!((half - oracle).abs() < 1e-15);
        assert!((half - 1.0601).abs() < 5e-5);
    }

    #[test]
    fn selective_rejects_bad_label() {
        let p = row(&[0.4, 0.4, 0.2]);
        assert!(selective_loss(&p, &[0.5], &[2]).is_err());
        assert!(selective_loss(&p, &[1.5], &[0]).is_err());
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_equal() {
        let p = Tensor::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.9, 0.05, 0.05]]).unwrap();
        let q = Tensor::from_rows(&[vec![0.3, 0.4, 0.3], vec![0.1, 0.45, 0.45]]).unwrap();
        assert!(kl_rows(&p, &q).unwrap().iter().all(|&v| v > 0.0));
        assert!(kl_rows(&p, &p).unwrap().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn nan_probabilities_are_diagnosed() {
        let p = row(&[f64::NAN, 0.5]);
        let t = row(&[1.0, 0.0]);
        assert!(matches!(sat_loss(&p, &t, &[1.0]), Err(Error::NonFinite { .. })));
    }
}
