use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{PoolMode, PoolParams};
use crate::tensor::Shape4;

/// One entry of a declarative architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Pool {
        window: usize,
        stride: usize,
        mode: PoolMode,
    },
    Relu,
    Dense {
        out_dim: usize,
    },
    Dropout {
        keep_probability: f64,
    },
    /// `kernel×kernel` conv followed by two 1×1 convs, each followed by ReLU.
    MlpConv {
        channels: [usize; 3],
        kernel: usize,
        padding: usize,
    },
    GlobalAvgPool,
    Flatten,
    SoftmaxHead,
    LinearHead,
}

fn one() -> usize {
    1
}

/// Output head of a network; decides the matching loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Linear,
}

impl LayerSpec {
    pub fn max_pool(window: usize, stride: usize) -> Self {
        LayerSpec::Pool {
            window,
            stride,
            mode: PoolMode::Max,
        }
    }

    pub fn conv(out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride: 1,
            padding,
        }
    }

    fn head(&self) -> Option<Head> {
        match self {
            LayerSpec::SoftmaxHead => Some(Head::Softmax),
            LayerSpec::LinearHead => Some(Head::Linear),
            _ => None,
        }
    }

    /// Shape produced by this layer for `input`.
    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        let conv_extent = |size: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            if s == 0 {
                return Err(Error::Config("conv stride must be ≥ 1".into()));
            }
            let padded = size + 2 * p;
            if padded < k || !(padded - k).is_multiple_of(s) {
                return Err(Error::Geometry(format!(
                    "conv {k}×{k}/{s} pad {p} does not fit extent {size}"
                )));
            }
            Ok((padded - k) / s + 1)
        };
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => Shape4::new(
                input.n,
                out_channels,
                conv_extent(input.h, kernel, stride, padding)?,
                conv_extent(input.w, kernel, stride, padding)?,
            ),
            LayerSpec::Pool {
                window,
                stride,
                mode,
            } => PoolParams::new(window, stride, mode)?.output_shape(input),
            LayerSpec::Relu => Ok(input),
            LayerSpec::Dropout { keep_probability } => {
                if !(keep_probability > 0.0 && keep_probability <= 1.0) {
                    return Err(Error::Config(format!(
                        "keep probability {keep_probability} outside (0, 1]"
                    )));
                }
                Ok(input)
            }
            LayerSpec::Dense { out_dim } => Shape4::vector(input.n, out_dim),
            LayerSpec::MlpConv {
                channels,
                kernel,
                padding,
            } => Shape4::new(
                input.n,
                channels[2],
                conv_extent(input.h, kernel, 1, padding)?,
                conv_extent(input.w, kernel, 1, padding)?,
            ),
            LayerSpec::GlobalAvgPool => Shape4::new(input.n, input.c, 1, 1),
            LayerSpec::Flatten => Shape4::vector(input.n, input.item_len()),
            LayerSpec::SoftmaxHead | LayerSpec::LinearHead => {
                if input.h != 1 || input.w != 1 {
                    return Err(Error::Shape(format!(
                        "head expects a (n, k, 1, 1) input, got {input}"
                    )));
                }
                Ok(input)
            }
        }
    }
}

/// Declarative architecture: input geometry (batch 1), ordered layers and
/// the output dimension of the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: String,
    pub input: Shape4,
    pub layers: Vec<LayerSpec>,
    pub output_dim: usize,
}

impl NetworkSpec {
    /// Checks shape chaining and head placement; returns the shape after each layer.
    pub fn validate(&self) -> Result<Vec<Shape4>> {
        let Some(last) = self.layers.last() else {
            return Err(Error::Config(format!("network {:?} has no layers", self.name)));
        };
        if last.head().is_none() {
            return Err(Error::Config(format!(
                "network {:?} must end with a softmax or linear head",
                self.name
            )));
        }
        if self.layers[..self.layers.len() - 1]
            .iter()
            .any(|l| l.head().is_some())
        {
            return Err(Error::Config(format!(
                "network {:?} has a head before its last layer",
                self.name
            )));
        }
        let mut shape = self.input.with_batch(1)?;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(shape).map_err(|e| match e {
                Error::Geometry(m) => Error::Geometry(format!("layer {i} ({layer:?}): {m}")),
                Error::Shape(m) => Error::Shape(format!("layer {i} ({layer:?}): {m}")),
                other => other,
            })?;
            shapes.push(shape);
        }
        if shape.c != self.output_dim {
            return Err(Error::Shape(format!(
                "network {:?} produces {} outputs, spec says {}",
                self.name, shape.c, self.output_dim
            )));
        }
        Ok(shapes)
    }

    pub fn head(&self) -> Option<Head> {
        self.layers.last().and_then(LayerSpec::head)
    }
}
