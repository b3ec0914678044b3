use super::LayerCache;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `max(0, x)`. The cached mask marks strictly positive inputs, so the
/// derivative at exactly 0 is 0.
pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, LayerCache<T>) {
    let mask: Vec<bool> = x.data().iter().map(|&v| v > T::zero()).collect();
    let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
    (y, LayerCache::Relu { mask })
}

pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, cache: LayerCache<T>) -> Result<Tensor<T>> {
    let LayerCache::Relu { mask } = cache else {
        return Err(Error::Shape("relu_backward given a non-relu cache".into()));
    };
    if mask.len() != grad_out.len() {
        return Err(Error::Shape(format!(
            "relu gradient has {} elements, forward input had {}",
            grad_out.len(),
            mask.len()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(&mask)
        .map(|(&g, &m)| if m { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

/// Row-wise softmax over channels of a `(n, k, 1, 1)` tensor, computed with
/// max-subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let s = logits.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::Shape(format!(
            "softmax expects 1×1 spatial dims, got {s}"
        )));
    }
    let mut out = Vec::with_capacity(s.len());
    for row in logits.data().chunks_exact(s.c) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| T::from_f64(e / total)));
    }
    Tensor::from_vec(s, out)
}
