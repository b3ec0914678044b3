use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped to this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    MeanSquaredError,
}

/// Mean negative log-probability of the true class.
///
/// `probs` is the softmax output `(n, k, 1, 1)`. The returned gradient is
/// with respect to the logits feeding the softmax: `(probs − onehot) / n`.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let s = probs.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::Shape(format!("cross-entropy expects (n, k, 1, 1), got {s}")));
    }
    if labels.len() != s.n {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            s.n
        )));
    }
    let k = s.c;
    let inv_n = 1.0 / s.n as f64;
    let mut grad = Vec::with_capacity(probs.len());
    let mut total = 0.0f64;
    for (row, &label) in probs.data().chunks_exact(k).zip(labels) {
        if label >= k {
            return Err(Error::Data(format!("label {label} out of range for {k} classes")));
        }
        total -= row[label].as_f64().max(PROB_FLOOR).ln();
        for (j, &p) in row.iter().enumerate() {
            let t = if j == label { 1.0 } else { 0.0 };
            grad.push(T::from_f64((p.as_f64() - t) * inv_n));
        }
    }
    Ok((total * inv_n, Tensor::from_vec(s, grad)?))
}

/// Mean squared error over the coordinates whose `mask` flag is set.
/// Masked-out coordinates get zero gradient.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, mask: &[bool]) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() || mask.len() != pred.len() {
        return Err(Error::Shape(format!(
            "mse: prediction {}, target {}, mask of {}",
            pred.shape(),
            target.shape(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Data("mse: no coordinate is present".into()));
    }
    let count = count as f64;
    let mut total = 0.0f64;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .zip(mask)
        .map(|((&p, &t), &m)| {
            if !m {
                return T::zero();
            }
            let d = p.as_f64() - t.as_f64();
            total += d * d;
            T::from_f64(2.0 * d / count)
        })
        .collect();
    Ok((total / count, Tensor::from_vec(pred.shape(), grad)?))
}
