//! Safe wrapper over the `matrixmultiply` GEMM kernels for strided views.

use crate::tensor::Scalar;

/// A read-only strided matrix view over a flat buffer.
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        MatRef {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transposed view; no data is moved.
    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn max_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            return 0;
        }
        (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride
    }
}

/// `out = a · b + beta · out` with `out` row-major `(a.rows × b.cols)`.
pub(crate) fn matmul_into<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, out: &mut [T], beta: T) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(out.len(), m * n, "output buffer size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v = *v * beta);
        return;
    }
    assert!(a.max_index() < a.data.len());
    assert!(b.max_index() < b.data.len());
    // SAFETY: every index touched by the kernel is bounded by the asserted
    // max_index of each view and by the output length checked above.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_products() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut out = [0.0f64; 4];
        matmul_into(
            MatRef::row_major(&a, 2, 3),
            MatRef::row_major(&b, 3, 2),
            &mut out,
            0.0,
        );
        assert_eq!(out, [4.0, 5.0, 10.0, 11.0]);

        // aᵀ·a is 3x3
        let a: Vec<f32> = a.iter().map(|&v| v as f32).collect();
        let mut out = [0.0f32; 9];
        let av = MatRef::row_major(&a, 2, 3);
        matmul_into(av.t(), av, &mut out, 0.0);
        assert_eq!(out, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
    }
}
