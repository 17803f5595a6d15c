use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("input lies on a region boundary (neuron {neuron}, pre-activation {value:e})")]
    Boundary { neuron: usize, value: f64 },

    #[error("training diverged at step {step}")]
    Training { step: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("invalid attention tensor at layer {layer}, head {head}, row {row}: {reason}")]
    Validation {
        layer: usize,
        head: usize,
        row: usize,
        reason: String,
    },

    #[error("base intrinsic dimension is zero; relative change undefined")]
    DegenerateBase,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
