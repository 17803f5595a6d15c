use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

/// Seeded deterministic generator.
///
/// Backed by ChaCha8 seeded through `SeedableRng::seed_from_u64`; normal
/// draws use the ziggurat sampler of `rand_distr::StandardNormal` in `f64`
/// and are converted to the target scalar afterwards. Both are
/// platform-independent, so a seed pins the exact draw sequence.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seed_from(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Matrix of i.i.d. `N(mean, std²)` draws, filled row-major.
    pub fn normal_matrix<T: Scalar>(
        &mut self,
        rows: usize,
        cols: usize,
        mean: f64,
        std: f64,
    ) -> Result<Matrix<T>> {
        let data = self.normal_vec(rows * cols, mean, std)?;
        Matrix::from_vec(rows, cols, data)
    }

    pub fn normal_vec<T: Scalar>(&mut self, len: usize, mean: f64, std: f64) -> Result<Vec<T>> {
        if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
            return Err(Error::param(format!(
                "normal draw needs finite mean and std >= 0, got mean={mean}, std={std}"
            )));
        }
        Ok((0..len)
            .map(|_| T::lit(mean + std * self.standard_normal()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_constant() {
        let m: Matrix<f64> = Rng::seed_from(1).normal_matrix(3, 4, 2.5, 0.0).unwrap();
        assert!(m.as_slice().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn same_seed_same_draws() {
        let a: Matrix<f64> = Rng::seed_from(42).normal_matrix(8, 8, 0.0, 1.0).unwrap();
        let b: Matrix<f64> = Rng::seed_from(42).normal_matrix(8, 8, 0.0, 1.0).unwrap();
        let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn negative_std_rejected() {
        assert!(matches!(
            Rng::seed_from(0).normal_matrix::<f64>(1, 1, 0.0, -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn sample_moments() {
        let v: Vec<f64> = Rng::seed_from(3).normal_vec(100_000, 0.0, 1.0).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.02, "std {}", var.sqrt());
    }
}
