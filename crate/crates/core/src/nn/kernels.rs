//! Inner loops shared by the forward and backward passes.

use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[inline]
pub(crate) fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `x · w + b` for a row batch `x` and an `inputs × outputs` weight matrix.
pub(crate) fn affine<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Matrix<T> {
    let mut out = Matrix::zeros(x.rows(), w.cols());
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        row.copy_from_slice(b);
        for (k, &xv) in x.row(i).iter().enumerate() {
            if xv != T::zero() {
                axpy(xv, w.row(k), row);
            }
        }
    }
    out
}

/// `dw += xᵀ · d`.
pub(crate) fn accumulate_outer<T: Scalar>(x: &Matrix<T>, d: &Matrix<T>, dw: &mut Matrix<T>) {
    for i in 0..x.rows() {
        let drow = d.row(i);
        for (k, &xv) in x.row(i).iter().enumerate() {
            if xv != T::zero() {
                axpy(xv, drow, dw.row_mut(k));
            }
        }
    }
}

/// `d · wᵀ`.
pub(crate) fn mul_transposed<T: Scalar>(d: &Matrix<T>, w: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(d.rows(), w.rows());
    for i in 0..d.rows() {
        let drow = d.row(i);
        let orow = out.row_mut(i);
        for (k, o) in orow.iter_mut().enumerate() {
            *o = dot(drow, w.row(k));
        }
    }
    out
}
