use rand::Rng;

use super::gemm::{matmul_into, MatRef};
use super::LayerCache;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

/// Fully connected layer: `y = W·x + b` per batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T: Scalar = f32> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `(out_dim, in_dim, 1, 1)`
    pub weights: Tensor<T>,
    /// `(out_dim, 1, 1, 1)`
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(DenseParams {
            in_dim,
            out_dim,
            weights: Tensor::zeros(Shape4::new(out_dim, in_dim, 1, 1)?),
            bias: Tensor::zeros(Shape4::new(out_dim, 1, 1, 1)?),
        })
    }

    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(in_dim, out_dim)?;
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        p.weights = Tensor::random_uniform(p.weights.shape(), bound, rng);
        Ok(p)
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        if input.item_len() != self.in_dim {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs per item, got {}",
                self.in_dim,
                input.item_len()
            )));
        }
        Shape4::vector(input.n, self.out_dim)
    }
}

/// Any input whose per-item length equals `in_dim` is accepted (it is read flattened).
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, p: &DenseParams<T>) -> Result<(Tensor<T>, LayerCache<T>)> {
    let os = p.output_shape(x.shape())?;
    let n = os.n;
    let mut acc = Vec::with_capacity(n * p.out_dim);
    for _ in 0..n {
        acc.extend_from_slice(p.bias.data());
    }
    matmul_into(
        MatRef::row_major(x.data(), n, p.in_dim),
        MatRef::row_major(p.weights.data(), p.out_dim, p.in_dim).t(),
        &mut acc,
        T::one(),
    );
    let y = Tensor::from_vec(os, acc)?;
    Ok((y, LayerCache::Dense { input: x.clone() }))
}

pub fn dense_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: LayerCache<T>,
    p: &DenseParams<T>,
) -> Result<(Tensor<T>, DenseGrads<T>)> {
    let LayerCache::Dense { input } = cache else {
        return Err(Error::Shape("dense_backward given a non-dense cache".into()));
    };
    let os = p.output_shape(input.shape())?;
    if grad_out.shape() != os {
        return Err(Error::Shape(format!(
            "dense gradient has shape {}, forward output was {os}",
            grad_out.shape()
        )));
    }
    let n = os.n;
    let gm = MatRef::row_major(grad_out.data(), n, p.out_dim);

    let mut gw = vec![T::zero(); p.out_dim * p.in_dim];
    matmul_into(gm.t(), MatRef::row_major(input.data(), n, p.in_dim), &mut gw, T::zero());
    let mut gx = vec![T::zero(); n * p.in_dim];
    matmul_into(gm, MatRef::row_major(p.weights.data(), p.out_dim, p.in_dim), &mut gx, T::zero());
    let mut gb = vec![0.0f64; p.out_dim];
    for row in grad_out.data().chunks_exact(p.out_dim) {
        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b.as_f64());
    }
    Ok((
        Tensor::from_vec(input.shape(), gx)?,
        DenseGrads {
            weights: Tensor::from_vec(p.weights.shape(), gw)?,
            bias: Tensor::from_vec(p.bias.shape(), gb.into_iter().map(T::from_f64).collect())?,
        },
    ))
}
