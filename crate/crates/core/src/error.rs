use thiserror::Error;

/// Errors raised across the library. Variants map onto the CLI exit codes:
/// configuration problems exit with 2, everything else with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("shape error: expected dimension {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("unknown trajectory id {0}")]
    Lookup(u64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("strategy error: {0}")]
    Strategy(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
