//! One-hidden-layer ReLU MLP with manual backprop and exact
//! piecewise-affine instrumentation.
//!
//! Row inputs `x` (n × d_in) map to `relu(x·w1 + b1)·w2 + b2`. On each
//! region of input space where the set of active hidden units is fixed, the
//! network is exactly affine; [`cpa`] extracts that region code and the
//! associated affine map.

pub mod cpa;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng, Scalar};

pub use cpa::{ActivationPattern, AffineMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMode {
    /// Biases drawn from `N(0, 1)`.
    Standard,
    /// Biases fixed at exactly zero; the arrangement of hidden hyperplanes is central.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    /// d_in × n_hidden
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    /// n_hidden × d_out
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

/// Gradients of a scalar loss with respect to every parameter and the input.
#[derive(Debug, Clone)]
pub struct MlpGrads<T> {
    pub params: MlpParams<T>,
    pub x: Matrix<T>,
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// n × n_hidden pre-activations `x·w1 + b1`.
    pub pre: Matrix<T>,
    /// n × n_hidden post-ReLU activations.
    pub hidden: Matrix<T>,
    pub out: Matrix<T>,
}

pub(crate) fn relu<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

impl<T: Scalar> MlpParams<T> {
    /// He-style initialisation: weights `N(0, 2/fan_in)`, biases per `bias_mode`.
    pub fn init(
        rng: &mut Rng,
        d_in: usize,
        n_hidden: usize,
        d_out: usize,
        bias_mode: BiasMode,
    ) -> Result<Self> {
        if d_in == 0 || n_hidden == 0 || d_out == 0 {
            return Err(Error::param(format!(
                "mlp dims must be >= 1, got d_in={d_in}, n_hidden={n_hidden}, d_out={d_out}"
            )));
        }
        let w1 = rng.normal_matrix(d_in, n_hidden, 0.0, (2.0 / d_in as f64).sqrt())?;
        let b1 = match bias_mode {
            BiasMode::Standard => rng.normal_vec(n_hidden, 0.0, 1.0)?,
            BiasMode::Zero => vec![T::zero(); n_hidden],
        };
        let w2 = rng.normal_matrix(n_hidden, d_out, 0.0, (2.0 / n_hidden as f64).sqrt())?;
        let b2 = match bias_mode {
            BiasMode::Standard => rng.normal_vec(d_out, 0.0, 1.0)?,
            BiasMode::Zero => vec![T::zero(); d_out],
        };
        Ok(MlpParams { w1, b1, w2, b2 })
    }

    /// Builds parameters from explicit tensors, checking shapes.
    pub fn from_parts(w1: Matrix<T>, b1: Vec<T>, w2: Matrix<T>, b2: Vec<T>) -> Result<Self> {
        let p = MlpParams { w1, b1, w2, b2 };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(d_in: usize, n_hidden: usize, d_out: usize) -> Self {
        MlpParams {
            w1: Matrix::zeros(d_in, n_hidden),
            b1: vec![T::zero(); n_hidden],
            w2: Matrix::zeros(n_hidden, d_out),
            b2: vec![T::zero(); d_out],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.w1.cols();
        if self.b1.len() != h {
            return Err(Error::Dimension {
                op: "mlp b1",
                left: self.w1.shape(),
                right: (1, self.b1.len()),
            });
        }
        if self.w2.rows() != h {
            return Err(Error::Dimension {
                op: "mlp w2",
                left: self.w1.shape(),
                right: self.w2.shape(),
            });
        }
        if self.b2.len() != self.w2.cols() {
            return Err(Error::Dimension {
                op: "mlp b2",
                left: self.w2.shape(),
                right: (1, self.b2.len()),
            });
        }
        let finite = self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("mlp parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward_cached(x)?.out)
    }

    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<MlpCache<T>> {
        if x.cols() != self.d_in() {
            return Err(Error::Dimension {
                op: "mlp_forward",
                left: x.shape(),
                right: self.w1.shape(),
            });
        }
        let pre = x.matmul(&self.w1)?.add_row_broadcast(&self.b1)?;
        let hidden = pre.map(relu);
        let out = hidden.matmul(&self.w2)?.add_row_broadcast(&self.b2)?;
        Ok(MlpCache { pre, hidden, out })
    }

    /// Reverse-mode gradients for upstream gradient `grad_out` (n × d_out).
    ///
    /// The ReLU subgradient at a pre-activation of exactly zero is zero.
    pub fn backward(&self, x: &Matrix<T>, grad_out: &Matrix<T>) -> Result<MlpGrads<T>> {
        let cache = self.forward_cached(x)?;
        self.backward_cached(x, &cache, grad_out)
    }

    pub fn backward_cached(
        &self,
        x: &Matrix<T>,
        cache: &MlpCache<T>,
        grad_out: &Matrix<T>,
    ) -> Result<MlpGrads<T>> {
        if grad_out.shape() != cache.out.shape() {
            return Err(Error::Dimension {
                op: "mlp_backward",
                left: cache.out.shape(),
                right: grad_out.shape(),
            });
        }
        let w2 = cache.hidden.t_matmul(grad_out)?;
        let b2 = grad_out.col_sums();
        let mut d_pre = grad_out.matmul_t(&self.w2)?;
        for (g, &p) in d_pre.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            if p <= T::zero() {
                *g = T::zero();
            }
        }
        let w1 = x.t_matmul(&d_pre)?;
        let b1 = d_pre.col_sums();
        let dx = d_pre.matmul_t(&self.w1)?;
        Ok(MlpGrads {
            params: MlpParams { w1, b1, w2, b2 },
            x: dx,
        })
    }

    /// Flat views of every parameter tensor, in a fixed order.
    pub fn slices(&self) -> Vec<&[T]> {
        vec![
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ]
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }
}

/// Mean squared error over all entries, and its gradient with respect to `pred`.
pub fn mse_with_grad<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>) -> Result<(T, Matrix<T>)> {
    let diff = pred.sub(target)?;
    let n = T::lit(diff.as_slice().len().max(1) as f64);
    let loss = diff.as_slice().iter().map(|&d| d * d).sum::<T>() / n;
    let grad = diff.scale(T::lit(2.0) / n);
    Ok((loss, grad))
}
