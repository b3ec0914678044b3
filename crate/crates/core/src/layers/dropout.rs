use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LayerCache, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Inverted dropout: kept activations are scaled by `1/keep_probability`
/// during training so inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutParams {
    pub keep_probability: f64,
    pub mode: Mode,
}

impl DropoutParams {
    pub fn new(keep_probability: f64, mode: Mode) -> Result<Self> {
        if !(keep_probability > 0.0 && keep_probability <= 1.0) {
            return Err(Error::Config(format!(
                "keep probability {keep_probability} outside (0, 1]"
            )));
        }
        Ok(DropoutParams {
            keep_probability,
            mode,
        })
    }
}

pub fn dropout_forward<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    p: &DropoutParams,
    rng: &mut R,
) -> (Tensor<T>, LayerCache<T>) {
    if p.mode == Mode::Inference || p.keep_probability >= 1.0 {
        return (x.clone(), LayerCache::Dropout { mask: None });
    }
    let scale = T::from_f64(1.0 / p.keep_probability);
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < p.keep_probability {
                scale
            } else {
                T::zero()
            }
        })
        .collect();
    let mut y = x.clone();
    y.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v = *v * m);
    (y, LayerCache::Dropout { mask: Some(mask) })
}

pub fn dropout_backward<T: Scalar>(grad_out: &Tensor<T>, cache: LayerCache<T>) -> Result<Tensor<T>> {
    let LayerCache::Dropout { mask } = cache else {
        return Err(Error::Shape("dropout_backward given a non-dropout cache".into()));
    };
    let Some(mask) = mask else {
        return Ok(grad_out.clone());
    };
    if mask.len() != grad_out.len() {
        return Err(Error::Shape("dropout gradient length differs from mask".into()));
    }
    let mut g = grad_out.clone();
    g.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v = *v * m);
    Ok(g)
}
