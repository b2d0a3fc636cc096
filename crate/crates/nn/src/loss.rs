//! Softmax and categorical cross-entropy.

use crate::scalar::Real;
use crate::tensor::Tensor;

/// Row-wise softmax of a (N, classes) logit matrix, stabilized by the
/// row maximum.
pub fn softmax<F: Real>(logits: &Tensor<F>) -> Tensor<F> {
    let (n, classes) = logits.dims2();
    let mut out = Tensor::zeros(&[n, classes]);
    for i in 0..n {
        let row = &logits.data()[i * classes..(i + 1) * classes];
        let max = row.iter().copied().fold(row[0], F::maximum);
        let mut denom = F::ZERO;
        for (j, &z) in row.iter().enumerate() {
            let e = (z - max).exp();
            out.data_mut()[i * classes + j] = e;
            denom += e;
        }
        for v in &mut out.data_mut()[i * classes..(i + 1) * classes] {
            *v = *v / denom;
        }
    }
    out
}

/// Mean categorical cross-entropy between logits and integer labels.
///
/// Returns the loss and the gradient with respect to the logits,
/// `(softmax - onehot) / N`, ready to feed into a backward pass.
pub fn cross_entropy_with_logits<F: Real>(
    logits: &Tensor<F>,
    labels: &[usize],
) -> (F, Tensor<F>) {
    let (n, classes) = logits.dims2();
    assert_eq!(labels.len(), n, "one label per row");
    let probs = softmax(logits);
    let inv_n = F::from_f64(1.0 / n as f64);
    let mut loss = F::ZERO;
    let mut grad = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        assert!(label < classes, "label {label} out of range");
        let p = probs.data()[i * classes + label];
        // clamp to avoid -inf on a degenerate prediction
        let p = p.maximum(F::from_f64(1e-300));
        loss += -(p.ln());
        grad.data_mut()[i * classes + label] -= F::ONE;
    }
    for v in grad.data_mut() {
        *v *= inv_n;
    }
    (loss * inv_n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_half_half() {
        let logits = Tensor::from_vec(&[1, 2], vec![3.7f64, 3.7]);
        let p = softmax(&logits);
        assert!((p.data()[0] - 0.5).abs() < 1e-12);
        assert!((p.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_translation_invariant() {
        let a = Tensor::from_vec(&[1, 3], vec![1.0f64, 2.0, 3.0]);
        let b = Tensor::from_vec(&[1, 3], vec![101.0f64, 102.0, 103.0]);
        for (x, y) in softmax(&a).data().iter().zip(softmax(&b).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let logits = Tensor::from_vec(&[2, 3], vec![0.1f64, -5.0, 2.0, 800.0, 799.0, -3.0]);
        let p = softmax(&logits);
        for i in 0..2 {
            let s: f64 = p.data()[i * 3..(i + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(p.data()[i * 3..(i + 1) * 3].iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn uniform_prediction_loss_is_ln2() {
        let logits = Tensor::from_vec(&[1, 2], vec![0.0f64, 0.0]);
        let (loss, _) = cross_entropy_with_logits(&logits, &[1]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_loss_vanishes() {
        let logits = Tensor::from_vec(&[1, 2], vec![-40.0f64, 40.0]);
        let (loss, _) = cross_entropy_with_logits(&logits, &[1]);
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn gradient_is_probs_minus_onehot_over_n() {
        let logits = Tensor::from_vec(&[2, 2], vec![0.0f64, 0.0, 1.0, -1.0]);
        let (_, grad) = cross_entropy_with_logits(&logits, &[0, 1]);
        // row 0: p = (0.5, 0.5), label 0 -> (-0.5, 0.5) / 2
        assert!((grad.data()[0] + 0.25).abs() < 1e-12);
        assert!((grad.data()[1] - 0.25).abs() < 1e-12);
        // gradient rows sum to zero
        assert!((grad.data()[2] + grad.data()[3]).abs() < 1e-12);
    }
}
