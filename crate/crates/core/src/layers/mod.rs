//! Forward and backward passes for the layer types used by the model builders.
//!
//! Every forward function returns its output together with a [`LayerCache`];
//! the matching backward function consumes that cache by value, so a cache
//! can drive exactly one backward pass.

mod activation;
mod conv;
mod dense;
mod dropout;
pub(crate) mod gemm;
mod pool;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::{Scalar, Shape4, Tensor};

pub use activation::{relu_backward, relu_forward, softmax};
pub use conv::{conv_backward, conv_forward, conv_forward_direct, ConvGrads, ConvParams};
pub(crate) use conv::conv_backward_impl;
pub use dense::{dense_backward, dense_forward, DenseGrads, DenseParams};
pub use dropout::{dropout_backward, dropout_forward, DropoutParams};
pub use pool::{pool_backward, pool_forward, PoolMode, PoolParams};

/// Train or inference behaviour for mode-dependent layers (dropout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Inference,
}

/// Interchangeable convolution implementations.
///
/// All variants agree within 1e-5 absolute. `Gemm` and `Threaded` run the
/// same per-sample arithmetic and are bitwise identical to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelVariant {
    /// Nested-loop direct summation.
    Direct,
    /// Patch unrolling into a matrix followed by a dense product.
    Gemm,
    /// `Gemm` parallelised over batch items on the current rayon pool.
    Threaded,
}

impl KernelVariant {
    pub const ALL: [KernelVariant; 3] = [
        KernelVariant::Direct,
        KernelVariant::Gemm,
        KernelVariant::Threaded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelVariant::Direct => "direct",
            KernelVariant::Gemm => "gemm",
            KernelVariant::Threaded => "threaded",
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(KernelVariant::Direct),
            "gemm" => Ok(KernelVariant::Gemm),
            "threaded" => Ok(KernelVariant::Threaded),
            other => Err(Error::Config(format!("unknown kernel variant {other:?}"))),
        }
    }
}

/// Forward-pass state needed by the matching backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<T: Scalar> {
    Conv {
        input: Tensor<T>,
        variant: KernelVariant,
    },
    Pool {
        input_shape: Shape4,
        params: PoolParams,
        /// Flat input offsets of each window maximum (max mode only).
        argmax: Option<Vec<usize>>,
    },
    Relu {
        /// `true` where the input was strictly positive.
        mask: Vec<bool>,
    },
    Dense {
        input: Tensor<T>,
    },
    Dropout {
        /// Per-element factor (0 or 1/keep); `None` when the layer was the identity.
        mask: Option<Vec<T>>,
    },
}
