use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pressure solve did not converge at step {step} after {iterations} iterations (residual {residual:e})")]
    PoissonNotConverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite value in flow field at step {step}")]
    NonFinite { step: usize },

    #[error("simulation failed at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no shedding detected")]
    NoShedding,

    #[error("insufficient frames: {required} required, {available} available")]
    InsufficientFrames { required: usize, available: usize },

    #[error("max > min violated for channel {channel} (min = max = {value})")]
    DegenerateRange { channel: String, value: f64 },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{0} split is empty")]
    EmptySplit(&'static str),

    #[error("dataset mismatch: {0}")]
    DatasetMismatch(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
