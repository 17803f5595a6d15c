//! Dense numeric kernel: matrices, causal softmax, seeded randomness and a
//! finite-difference gradient oracle.

mod grad;
mod matrix;
mod rng;
mod scalar;

pub use grad::{finite_diff_grad, relative_error};
pub use matrix::{matmul, softmax_causal, Matrix};
pub(crate) use matrix::{dot, softmax_into};
pub use rng::Rng;
pub use scalar::Scalar;
