//! A small convolutional network framework written from scratch, with the
//! pipelines built on it: patch-based skin/burn classification and
//! segmentation on color + infrared images, facial keypoint regression, and
//! a convolution-kernel speed study.
//!
//! Tensors are rank-4 `(n, c, h, w)`; see [`tensor`]. Layers live in
//! [`layers`], declarative architectures and the builders in [`models`],
//! optimisation and gradient checking in [`train`], data handling and the
//! synthetic generators in [`data`], evaluation in [`metrics`] and the
//! benchmark harness in [`bench`].

pub mod bench;
pub mod data;
pub mod error;
pub mod io;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Shape4, Tensor};
