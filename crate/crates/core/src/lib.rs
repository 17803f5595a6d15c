//! Geometry of ReLU MLPs and single-layer attention blocks: exact region
//! instrumentation, Zaslavsky bounds, attention-based intrinsic dimension,
//! and the training runs that connect them.
//!
//! Numeric code is generic over [`numkit::Scalar`]; the aliases below fix it
//! to `f64` (the default for all experiments) or `f32`.

pub mod attention;
pub mod codec;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod mlp;
pub mod numkit;
pub mod traces;
pub mod train;

pub use error::{Error, Result};

pub type Matrix64 = numkit::Matrix<f64>;
pub type Matrix32 = numkit::Matrix<f32>;
pub type MlpParams64 = mlp::MlpParams<f64>;
pub type MlpParams32 = mlp::MlpParams<f32>;
pub type TransformerParams64 = attention::TransformerParams<f64>;
pub type TransformerParams32 = attention::TransformerParams<f32>;
pub type AttentionTensor64 = attention::AttentionTensor<f64>;
pub type AttentionTensor32 = attention::AttentionTensor<f32>;
