use thiserror::Error;

pub type Result<T> = std::result::Result<T, BoiseError>;

#[derive(Debug, Error)]
pub enum BoiseError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("row {row} ({target}) has {observed} observed entries; at least 2 are needed")]
    DegenerateRow {
        row: usize,
        target: String,
        observed: usize,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("intermediate outcome {outcome} has zero estimated predictive mass")]
    ZeroPredictiveMass { outcome: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("enumeration guard: {0}")]
    Guard(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BoiseError::Invalid(msg.into()))
}
