//! Row-wise probability helpers shared by losses, training, and evaluation.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to every probability before taking its logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_finite() {
        return Err(Error::invalid("softmax input contains non-finite logits"));
    }
    let mut out = logits.clone();
    if out.cols() == 0 {
        return Ok(out);
    }
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Fraction of rows whose argmax equals the given label.
pub fn accuracy(scores: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(scores.row(i)) == y)
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn probs(logits: &[f64]) -> Vec<f64> {
        let t = Tensor::from_vec(&[1, logits.len()], logits.to_vec()).unwrap();
        softmax(&t).unwrap().into_data()
    }

    #[test]
    fn symmetric_logits_give_uniform() {
        assert_eq!(probs(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn large_logit_does_not_overflow() {
        let p = probs(&[1000.0, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-15);
        assert!(p[1] < 1e-300);
    }

    #[test]
    fn ln2_logit_gives_two_thirds() {
        // exp(ln 2) = 2, so the row is (2, 1) / 3.
        let p = probs(&[std::f64::consts::LN_2, 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let t = Tensor::from_vec(&[1, 2], vec![f64::NAN, 0.0]).unwrap();
        assert!(matches!(softmax(&t), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn argmax_ties_take_lowest() {
        assert_eq!(argmax(&[0.3, 0.3, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(row in proptest::collection::vec(-50.0f64..50.0, 2..12)) {
            let p = probs(&row);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn shift_invariance_is_bitwise(
            row in proptest::collection::vec(-20.0f64..20.0, 2..8),
            shift in -20.0f64..20.0,
        ) {
            // After max subtraction the shifted row reduces to the same
            // differences whenever the shift is exactly representable.
            let shift = shift.round();
            let base: Vec<f64> = row.iter().map(|v| (v * 8.0).round() / 8.0).collect();
            let moved: Vec<f64> = base.iter().map(|v| v + shift).collect();
            prop_assert_eq!(probs(&base), probs(&moved));
        }
    }
}
