use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("row {row}: timestamp {timestamp} does not increase on the previous row")]
    NonMonotonic { row: usize, timestamp: i64 },
    #[error("row {row}: cannot parse timestamp {value:?}")]
    BadTimestamp { row: usize, value: String },
    #[error("frame has no target channels")]
    NoTargets,
    #[error("config error: {0}")]
    Config(String),
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("every future target cell in the window is missing")]
    UnusableWindow,
    #[error("non-finite value during {stage}: {detail}")]
    NonFinite { stage: &'static str, detail: String },
    #[error("naive forecast error of the reference series is zero; MASE scale undefined")]
    UndefinedScale,
    #[error("model parameters have not been trained")]
    Untrained,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
