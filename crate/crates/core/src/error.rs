use crate::interp::InterpError;
use crate::metrics::MetricError;

use crate::ndkernel::KernelError;

/// File-format and filesystem failures.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed data at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid dataset: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration} (loss {loss}): {reason}")]
    Diverged {
        iteration: usize,
        loss: f64,
        reason: String,
        trace: Vec<f64>,
    },
    #[error("triplet {id}: {source}")]
    Triplet {
        id: usize,
        #[source]
        source: Box<Error>,
    },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(IoError::Io(e))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(IoError::Json(e))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(IoError::Csv(e))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
