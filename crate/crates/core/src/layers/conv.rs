//! 2-D cross-correlation (no kernel flip) with zero padding and stride.

use rand::Rng;
use rayon::prelude::*;

use super::gemm::{matmul_into, MatRef};
use super::{KernelVariant, LayerCache};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Scalar = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    /// `(out_channels, in_channels, kernel_h, kernel_w)`
    pub weights: Tensor<T>,
    /// `(out_channels, 1, 1, 1)`
    pub bias: Tensor<T>,
}

/// Parameter gradients of a convolution.
#[derive(Debug, Clone)]
pub struct ConvGrads<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    /// Zero-initialised parameters.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("convolution stride must be ≥ 1".into()));
        }
        let weights = Tensor::zeros(Shape4::new(out_channels, in_channels, kernel.0, kernel.1)?);
        let bias = Tensor::zeros(Shape4::new(out_channels, 1, 1, 1)?);
        Ok(ConvParams {
            in_channels,
            out_channels,
            kernel_h: kernel.0,
            kernel_w: kernel.1,
            stride,
            padding,
            weights,
            bias,
        })
    }

    /// Uniform ±sqrt(6/(fan_in+fan_out)) weights, zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(in_channels, out_channels, kernel, stride, padding)?;
        let area = kernel.0 * kernel.1;
        let bound = (6.0 / ((in_channels + out_channels) * area) as f64).sqrt();
        p.weights = Tensor::random_uniform(p.weights.shape(), bound, rng);
        Ok(p)
    }

    /// Output `(h, w)` for an input plane of `(h, w)`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            out_extent(h, self.kernel_h, self.stride, self.padding)?,
            out_extent(w, self.kernel_w, self.stride, self.padding)?,
        ))
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        if input.c != self.in_channels {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels, input.c
            )));
        }
        let (oh, ow) = self.output_hw(input.h, input.w)?;
        Shape4::new(input.n, self.out_channels, oh, ow)
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }
}

fn out_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = size + 2 * padding;
    if padded < kernel {
        return Err(Error::Geometry(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::Geometry(format!(
            "({size} + 2·{padding} − {kernel}) / {stride} is not an integer"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new<T: Scalar>(p: &ConvParams<T>, input: Shape4) -> Result<Self> {
        let out = p.output_shape(input)?;
        Ok(Geometry {
            c: input.c,
            h: input.h,
            w: input.w,
            kh: p.kernel_h,
            kw: p.kernel_w,
            stride: p.stride,
            pad: p.padding,
            oh: out.h,
            ow: out.w,
        })
    }

    /// Range of output columns `ow` whose input column `ow·s + kx − pad` is in bounds.
    fn valid_range(&self, k: usize, out: usize, size: usize) -> (usize, usize) {
        // smallest o with o·s + k ≥ pad
        let lo = if k >= self.pad {
            0
        } else {
            (self.pad - k).div_ceil(self.stride)
        };
        // largest o with o·s + k − pad ≤ size − 1, exclusive bound
        let hi = if size + self.pad < k + 1 {
            0
        } else {
            ((size + self.pad - 1 - k) / self.stride + 1).min(out)
        };
        (lo.min(hi), hi)
    }
}

/// Unrolls one batch item into a `(c·kh·kw) × (oh·ow)` matrix.
fn im2col<T: Scalar>(input: &[T], g: &Geometry, col: &mut [T]) {
    let cols = g.oh * g.ow;
    for c in 0..g.c {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ky, g.oh, g.h);
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                let (ox_lo, ox_hi) = g.valid_range(kx, g.ow, g.w);
                for oy in 0..g.oh {
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if oy < oy_lo || oy >= oy_hi {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = oy * g.stride + ky - g.pad;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    line[..ox_lo].fill(T::zero());
                    line[ox_hi..].fill(T::zero());
                    if ox_lo == ox_hi {
                        continue;
                    }
                    if g.stride == 1 {
                        let start = ox_lo + kx - g.pad;
                        line[ox_lo..ox_hi].copy_from_slice(&src[start..start + (ox_hi - ox_lo)]);
                    } else {
                        for ox in ox_lo..ox_hi {
                            line[ox] = src[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back into an image-shaped buffer.
fn col2im<T: Scalar>(col: &[T], g: &Geometry, out: &mut [T]) {
    let cols = g.oh * g.ow;
    out.fill(T::zero());
    for c in 0..g.c {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            let (oy_lo, oy_hi) = g.valid_range(ky, g.oh, g.h);
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &col[row * cols..(row + 1) * cols];
                let (ox_lo, ox_hi) = g.valid_range(kx, g.ow, g.w);
                for oy in oy_lo..oy_hi {
                    let iy = oy * g.stride + ky - g.pad;
                    let line = &src[oy * g.ow..(oy + 1) * g.ow];
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for ox in ox_lo..ox_hi {
                        let d = &mut dst[ox * g.stride + kx - g.pad];
                        *d = *d + line[ox];
                    }
                }
            }
        }
    }
}

fn gemm_forward_item<T: Scalar>(
    input: &[T],
    g: &Geometry,
    weights: &[T],
    bias: &[T],
    out_channels: usize,
    out: &mut [T],
) {
    let k = g.c * g.kh * g.kw;
    let cols = g.oh * g.ow;
    let mut col = vec![T::zero(); k * cols];
    im2col(input, g, &mut col);
    for (co, row) in out.chunks_exact_mut(cols).enumerate() {
        row.fill(bias[co]);
    }
    matmul_into(
        MatRef::row_major(weights, out_channels, k),
        MatRef::row_major(&col, k, cols),
        out,
        T::one(),
    );
}

/// Reference nested-loop convolution with 64-bit accumulation.
pub fn conv_forward_direct<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let out_shape = p.output_shape(x.shape())?;
    let s = x.shape();
    let mut out = Tensor::zeros(out_shape);
    let pad = p.padding as isize;
    for n in 0..s.n {
        for co in 0..p.out_channels {
            let b = p.bias.data()[co].as_f64();
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut acc = b;
                    for ci in 0..s.c {
                        for ky in 0..p.kernel_h {
                            let iy = (oy * p.stride + ky) as isize - pad;
                            if iy < 0 || iy >= s.h as isize {
                                continue;
                            }
                            for kx in 0..p.kernel_w {
                                let ix = (ox * p.stride + kx) as isize - pad;
                                if ix < 0 || ix >= s.w as isize {
                                    continue;
                                }
                                acc += x.at(n, ci, iy as usize, ix as usize).as_f64()
                                    * p.weights.at(co, ci, ky, kx).as_f64();
                            }
                        }
                    }
                    out.set(n, co, oy, ox, T::from_f64(acc));
                }
            }
        }
    }
    Ok(out)
}

pub fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    variant: KernelVariant,
) -> Result<(Tensor<T>, LayerCache<T>)> {
    let out = match variant {
        KernelVariant::Direct => conv_forward_direct(x, p)?,
        KernelVariant::Gemm | KernelVariant::Threaded => {
            let g = Geometry::new(p, x.shape())?;
            let out_shape = p.output_shape(x.shape())?;
            let mut out = Tensor::zeros(out_shape);
            let weights = p.weights.data();
            let item_out = out_shape.item_len();
            let item_in = x.shape().item_len();
            let bias = p.bias.data();
            if variant == KernelVariant::Threaded {
                out.data_mut()
                    .par_chunks_mut(item_out)
                    .zip(x.data().par_chunks(item_in))
                    .for_each(|(o, i)| gemm_forward_item(i, &g, weights, bias, p.out_channels, o));
            } else {
                for (o, i) in out
                    .data_mut()
                    .chunks_mut(item_out)
                    .zip(x.data().chunks(item_in))
                {
                    gemm_forward_item(i, &g, weights, bias, p.out_channels, o);
                }
            }
            out
        }
    };
    Ok((
        out,
        LayerCache::Conv {
            input: x.clone(),
            variant,
        },
    ))
}

struct ItemGrads<T> {
    grad_in: Option<Vec<T>>,
    grad_w: Vec<T>,
    grad_b: Vec<f64>,
}

fn backward_item<T: Scalar>(
    input: &[T],
    grad_out: &[T],
    g: &Geometry,
    weights: &[T],
    out_channels: usize,
    need_input_grad: bool,
) -> ItemGrads<T> {
    let k = g.c * g.kh * g.kw;
    let cols = g.oh * g.ow;
    let mut col = vec![T::zero(); k * cols];
    im2col(input, g, &mut col);
    let gout_m = MatRef::row_major(grad_out, out_channels, cols);

    let mut grad_w = vec![T::zero(); out_channels * k];
    matmul_into(gout_m, MatRef::row_major(&col, k, cols).t(), &mut grad_w, T::zero());

    let grad_b = grad_out
        .chunks_exact(cols)
        .map(|r| r.iter().map(|v| v.as_f64()).sum())
        .collect();

    let grad_in = need_input_grad.then(|| {
        let mut gcol = col;
        matmul_into(
            MatRef::row_major(weights, out_channels, k).t(),
            gout_m,
            &mut gcol,
            T::zero(),
        );
        let mut grad_in = vec![T::zero(); g.c * g.h * g.w];
        col2im(&gcol, g, &mut grad_in);
        grad_in
    });
    ItemGrads {
        grad_in,
        grad_w,
        grad_b,
    }
}

/// Gradients of the convolution with respect to its input, weights and bias.
///
/// Per-item weight gradients are summed in batch order, so the serial and
/// threaded paths are bitwise identical.
pub fn conv_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: LayerCache<T>,
    p: &ConvParams<T>,
) -> Result<(Tensor<T>, ConvGrads<T>)> {
    let (gi, grads) = conv_backward_impl(grad_out, cache, p, true)?;
    Ok((gi.expect("input gradient requested"), grads))
}

/// Like [`conv_backward`] but skips the input gradient when it is not needed
/// (first layer of a network).
pub(crate) fn conv_backward_impl<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: LayerCache<T>,
    p: &ConvParams<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, ConvGrads<T>)> {
    let LayerCache::Conv { input, variant } = cache else {
        return Err(Error::Shape("conv_backward given a non-convolution cache".into()));
    };
    let expected = p.output_shape(input.shape())?;
    if grad_out.shape() != expected {
        return Err(Error::Shape(format!(
            "conv gradient has shape {}, forward output was {expected}",
            grad_out.shape()
        )));
    }
    let g = Geometry::new(p, input.shape())?;
    let weights = p.weights.data();
    let in_len = input.shape().item_len();
    let out_len = expected.item_len();
    let run =
        |(i, go): (&[T], &[T])| backward_item(i, go, &g, weights, p.out_channels, need_input_grad);
    let items: Vec<ItemGrads<T>> = if variant == KernelVariant::Threaded {
        input
            .data()
            .par_chunks(in_len)
            .zip(grad_out.data().par_chunks(out_len))
            .map(run)
            .collect()
    } else {
        input
            .data()
            .chunks(in_len)
            .zip(grad_out.data().chunks(out_len))
            .map(run)
            .collect()
    };

    let mut gw = vec![0.0; p.out_channels * p.patch_len()];
    let mut gb = vec![0.0; p.out_channels];
    let mut grad_in = need_input_grad.then(|| Vec::with_capacity(input.len()));
    for item in items {
        gw.iter_mut().zip(&item.grad_w).for_each(|(a, b)| *a += b.as_f64());
        gb.iter_mut().zip(&item.grad_b).for_each(|(a, b)| *a += b);
        if let (Some(acc), Some(gi)) = (grad_in.as_mut(), item.grad_in) {
            acc.extend(gi);
        }
    }
    let to_t = |v: Vec<f64>| v.into_iter().map(T::from_f64).collect::<Vec<T>>();
    Ok((
        grad_in.map(|g| Tensor::from_vec(input.shape(), g)).transpose()?,
        ConvGrads {
            weights: Tensor::from_vec(p.weights.shape(), to_t(gw))?,
            bias: Tensor::from_vec(p.bias.shape(), to_t(gb))?,
        },
    ))
}
