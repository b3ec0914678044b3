//! Dense rank-4 tensors in `(n, c, h, w)` row-major layout.
//!
//! Storage is generic over [`Scalar`] so the same layer code runs in 32-bit
//! (training, inference) and 64-bit (finite-difference oracles). Reductions
//! and dot products accumulate in `f64` regardless of the storage type.

use std::fmt;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type of a [`Tensor`].
pub trait Scalar: Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Raw strided GEMM `c = a·b + beta·c` in this precision.
    ///
    /// # Safety
    /// All strided indices must lie inside the pointed-to buffers.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Tensor geometry: batch, channels, height, width. All components are ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::Size(format!(
                "shape ({n},{c},{h},{w}) has a zero component"
            )));
        }
        n.checked_mul(c)
            .and_then(|v| v.checked_mul(h))
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| Error::Size(format!("shape ({n},{c},{h},{w}) overflows usize")))?;
        Ok(Shape4 { n, c, h, w })
    }

    /// Vector-shaped `(n, len, 1, 1)`.
    pub fn vector(n: usize, len: usize) -> Result<Self> {
        Self::new(n, len, 1, 1)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per batch item.
    #[inline]
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Inverse of [`Shape4::offset`].
    #[inline]
    pub fn unravel(&self, mut i: usize) -> (usize, usize, usize, usize) {
        let w = i % self.w;
        i /= self.w;
        let h = i % self.h;
        i /= self.h;
        let c = i % self.c;
        (i / self.c, c, h, w)
    }

    pub fn with_batch(&self, n: usize) -> Result<Self> {
        Self::new(n, self.c, self.h, self.w)
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<_> = self.data.iter().take(8).collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("head", &head)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape4) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: Shape4, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape4, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Uniform samples in `[-bound, bound]`.
    pub fn random_uniform<R: Rng + ?Sized>(shape: Shape4, bound: f64, rng: &mut R) -> Self {
        let data = (0..shape.len())
            .map(|_| T::from_f64(rng.random_range(-bound..=bound)))
            .collect();
        Tensor { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.shape.offset(n, c, h, w);
        self.data[i] = v;
    }

    /// Contiguous slice holding batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.shape.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.shape.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Same data, new geometry with the same element count.
    pub fn reshape(self, shape: Shape4) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_in_place(&mut self, f: impl Fn(T) -> T) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Spatial mean per `(n, c)` plane, giving shape `(n, c, 1, 1)`.
    pub fn reduce_mean_spatial(&self) -> Self {
        let plane = self.shape.plane_len();
        let data = self
            .data
            .chunks_exact(plane)
            .map(|p| {
                let sum: f64 = p.iter().map(|v| v.as_f64()).sum();
                T::from_f64(sum / plane as f64)
            })
            .collect();
        Tensor {
            shape: Shape4 {
                n: self.shape.n,
                c: self.shape.c,
                h: 1,
                w: 1,
            },
            data,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    /// 64-bit accumulated inner product of the flattened data.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "dot of {} with {}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "comparing {} with {}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Gathers the listed batch items into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let shape = self.shape.with_batch(indices.len())?;
        let mut data = Vec::with_capacity(shape.len());
        for &i in indices {
            if i >= self.shape.n {
                return Err(Error::Shape(format!(
                    "batch index {i} out of range for {}",
                    self.shape
                )));
            }
            data.extend_from_slice(self.item(i));
        }
        Ok(Tensor { shape, data })
    }
}
