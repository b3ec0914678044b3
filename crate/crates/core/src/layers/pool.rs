use serde::{Deserialize, Serialize};

use super::LayerCache;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Average,
}

/// Square pooling window. The window/stride pair must tile the input exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolParams {
    pub window: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

impl PoolParams {
    pub fn new(window: usize, stride: usize, mode: PoolMode) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::Config("pool window and stride must be ≥ 1".into()));
        }
        Ok(PoolParams {
            window,
            stride,
            mode,
        })
    }

    pub fn max2() -> Self {
        PoolParams {
            window: 2,
            stride: 2,
            mode: PoolMode::Max,
        }
    }

    fn extent(&self, size: usize) -> Result<usize> {
        if size < self.window || !(size - self.window).is_multiple_of(self.stride) {
            return Err(Error::Geometry(format!(
                "pool window {} / stride {} does not tile extent {size}",
                self.window, self.stride
            )));
        }
        Ok((size - self.window) / self.stride + 1)
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        Shape4::new(input.n, input.c, self.extent(input.h)?, self.extent(input.w)?)
    }
}

pub fn pool_forward<T: Scalar>(x: &Tensor<T>, p: &PoolParams) -> Result<(Tensor<T>, LayerCache<T>)> {
    let s = x.shape();
    let os = p.output_shape(s)?;
    let mut out = Vec::with_capacity(os.len());
    let mut argmax = (p.mode == PoolMode::Max).then(|| Vec::with_capacity(os.len()));
    let data = x.data();
    let area = (p.window * p.window) as f64;
    for plane in 0..s.n * s.c {
        let base = plane * s.plane_len();
        for oy in 0..os.h {
            for ox in 0..os.w {
                let (y0, x0) = (oy * p.stride, ox * p.stride);
                match p.mode {
                    PoolMode::Max => {
                        let mut best = base + y0 * s.w + x0;
                        for y in y0..y0 + p.window {
                            for xx in x0..x0 + p.window {
                                let i = base + y * s.w + xx;
                                // strict comparison keeps the first maximum in scan order
                                if data[i] > data[best] {
                                    best = i;
                                }
                            }
                        }
                        out.push(data[best]);
                        if let Some(a) = argmax.as_mut() {
                            a.push(best);
                        }
                    }
                    PoolMode::Average => {
                        let mut acc = 0.0;
                        for y in y0..y0 + p.window {
                            for xx in x0..x0 + p.window {
                                acc += data[base + y * s.w + xx].as_f64();
                            }
                        }
                        out.push(T::from_f64(acc / area));
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(os, out)?,
        LayerCache::Pool {
            input_shape: s,
            params: *p,
            argmax,
        },
    ))
}

pub fn pool_backward<T: Scalar>(grad_out: &Tensor<T>, cache: LayerCache<T>) -> Result<Tensor<T>> {
    let LayerCache::Pool {
        input_shape: s,
        params: p,
        argmax,
    } = cache
    else {
        return Err(Error::Shape("pool_backward given a non-pool cache".into()));
    };
    let os = p.output_shape(s)?;
    if grad_out.shape() != os {
        return Err(Error::Shape(format!(
            "pool gradient has shape {}, forward output was {os}",
            grad_out.shape()
        )));
    }
    let mut grad = vec![0.0f64; s.len()];
    let g = grad_out.data();
    match argmax {
        Some(idx) => {
            for (&i, v) in idx.iter().zip(g) {
                grad[i] += v.as_f64();
            }
        }
        None => {
            let area = (p.window * p.window) as f64;
            for plane in 0..s.n * s.c {
                let base = plane * s.plane_len();
                for oy in 0..os.h {
                    for ox in 0..os.w {
                        let v = g[(plane * os.h + oy) * os.w + ox].as_f64() / area;
                        for y in oy * p.stride..oy * p.stride + p.window {
                            for x in ox * p.stride..ox * p.stride + p.window {
                                grad[base + y * s.w + x] += v;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(s, grad.into_iter().map(T::from_f64).collect())
}
