use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row (row {row}): {field}: {msg}")]
    MalformedRow {
        row: usize,
        field: &'static str,
        msg: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Surrogate for an empirical positivity (Assumption 2) failure: a
    /// stratum the estimator needs was never observed in training data.
    #[error("positivity violation: stratum {stratum} has no observations")]
    Positivity { stratum: String },

    #[error("{0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
