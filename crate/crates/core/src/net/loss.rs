//! Training losses: binary cross-entropy over sigmoid outputs (the
//! negotiated path) and softmax cross-entropy over logits (the one-hot
//! baseline).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Predictions are clamped this far away from {0,1} before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
}

/// Mean binary cross-entropy over every element of `pred` against `target`.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "bce prediction shape {:?} vs target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("bce over empty tensors".into()));
    }
    let sum = bce_sum(pred.data(), target.data());
    Ok(sum / pred.len() as f64)
}

/// Sum (not mean) of per-element BCE terms.
pub(crate) fn bce_sum(pred: &[f64], target: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        let p = clamp(p);
        sum -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    sum
}

/// Gradient of `bce_sum` with respect to the predictions. Elements clamped
/// in the forward pass get zero gradient so the derivative matches the value
/// actually computed.
pub(crate) fn bce_sum_grad(pred: &[f64], target: &[f64], d_pred: &mut [f64]) {
    for ((&p, &t), g) in pred.iter().zip(target).zip(d_pred.iter_mut()) {
        if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
            *g = 0.0;
        } else {
            *g = -t / p + (1.0 - t) / (1.0 - p);
        }
    }
}

/// Sum of softmax cross-entropy terms for a batch of logits; also writes the
/// gradient (softmax minus one-hot) into `d_logits`.
pub(crate) fn softmax_ce_sum(
    logits: &[f64],
    labels: &[usize],
    classes: usize,
    d_logits: &mut [f64],
) -> f64 {
    let mut sum = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits[i * classes..(i + 1) * classes];
        let d_row = &mut d_logits[i * classes..(i + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            d_row[j] = e;
            z += e;
        }
        sum -= (d_row[label] / z).ln();
        for v in d_row.iter_mut() {
            *v /= z;
        }
        d_row[label] -= 1.0;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_gives_ln_two() {
        let p = Tensor::filled(&[2, 4], 0.5);
        let t = Tensor::filled(&[2, 4], 0.5);
        let loss = bce_loss(&p, &t).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_two_element_case() {
        let p = Tensor::from_vec(&[1, 2], vec![0.9, 0.1]).unwrap();
        let t = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let loss = bce_loss(&p, &t).unwrap();
        let expected = -(0.9f64.ln() + 0.9f64.ln()) / 2.0;
        assert!((loss - expected).abs() < 1e-12, "loss {loss} vs {expected}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Tensor::zeros(&[1, 2]);
        let t = Tensor::zeros(&[2, 1]);
        assert!(matches!(bce_loss(&p, &t), Err(Error::Shape(_))));
    }

    #[test]
    fn complement_symmetry() {
        let p = Tensor::from_vec(&[1, 3], vec![0.2, 0.7, 0.95]).unwrap();
        let t = Tensor::from_vec(&[1, 3], vec![0.1, 1.0, 0.4]).unwrap();
        let p_c = Tensor::from_vec(&[1, 3], p.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        let t_c = Tensor::from_vec(&[1, 3], t.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        let a = bce_loss(&p, &t).unwrap();
        let b = bce_loss(&p_c, &t_c).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn clamp_keeps_loss_finite() {
        let p = Tensor::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap();
        let t = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]).unwrap();
        let loss = bce_loss(&p, &t).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn softmax_ce_matches_direct_formula() {
        let logits = vec![1.0, 2.0, 0.5, -1.0, 0.0, 3.0];
        let labels = vec![1usize, 2usize];
        let mut d = vec![0.0; 6];
        let sum = softmax_ce_sum(&logits, &labels, 3, &mut d);
        let direct: f64 = {
            let row_loss = |row: &[f64], y: usize| {
                let z: f64 = row.iter().map(|v| v.exp()).sum();
                -(row[y].exp() / z).ln()
            };
            row_loss(&logits[0..3], 1) + row_loss(&logits[3..6], 2)
        };
        assert!((sum - direct).abs() < 1e-12);
        // gradient rows sum to zero (softmax minus one-hot)
        assert!((d[0] + d[1] + d[2]).abs() < 1e-12);
    }
}
