use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Lower clamp applied to predictions inside the cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

fn check_shapes<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "loss operands",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    Ok(())
}

/// Mean binary cross-entropy over all elements, with its gradient.
///
/// Predictions are clamped to `[1e-7, 1 - 1e-7]`; the gradient is zero where
/// the clamp is active. Targets may be any value in `[0, 1]`.
pub fn binary_crossentropy<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    check_shapes(pred, target)?;
    let n = T::from_usize_lossy(pred.as_slice().len().max(1));
    let lo = T::lit(BCE_EPSILON);
    let hi = T::one() - lo;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = T::zero();
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let pc = p.max(lo).min(hi);
        total -= t * pc.ln() + (T::one() - t) * (T::one() - pc).ln();
        if p > lo && p < hi {
            *g = (pc - t) / (pc * (T::one() - pc)) / n;
        }
    }
    Ok((total / n, grad))
}

/// Mean squared error over all elements, with its gradient.
pub fn mse<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    check_shapes(pred, target)?;
    let n = T::from_usize_lossy(pred.as_slice().len().max(1));
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut total = T::zero();
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let r = p - t;
        total += r * r;
        *g = T::lit(2.0) * r / n;
    }
    Ok((total / n, grad))
}
