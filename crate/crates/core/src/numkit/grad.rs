use crate::numkit::{Matrix, Scalar};

/// Central finite-difference gradient of a scalar function of a matrix.
///
/// Entry `(i, j)` is `(f(x + h e_ij) - f(x - h e_ij)) / 2h`.
pub fn finite_diff_grad<T, F>(mut f: F, x: &Matrix<T>, h: T) -> Matrix<T>
where
    T: Scalar,
    F: FnMut(&Matrix<T>) -> T,
{
    assert!(h > T::zero(), "finite-difference step must be positive");
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let two_h = h + h;
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[k] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[k] = orig;
        grad.as_mut_slice()[k] = (up - down) / two_h;
    }
    grad
}

/// Norm-wise relative error `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let mut diff = T::zero();
    let mut na = T::zero();
    let mut nb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        na += x * x;
        nb += y * y;
    }
    let denom = na.max(nb).sqrt();
    if denom == T::zero() {
        T::zero()
    } else {
        diff.sqrt() / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [0.5, 4.0]]).unwrap();
        let g = finite_diff_grad(|m: &Matrix<f64>| m.sum(), &x, 1e-5);
        for &v in g.as_slice() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn square_at_three() {
        let x = Matrix::from_rows(&[[3.0]]).unwrap();
        let g = finite_diff_grad(|m: &Matrix<f64>| m[(0, 0)] * m[(0, 0)], &x, 1e-5);
        assert!((g[(0, 0)] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn relative_error_of_zero_vectors() {
        assert_eq!(relative_error(&[0.0f64, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0f64, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
