use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("column {0} has no non-missing values")]
    EmptyColumn(usize),

    #[error("empty background table")]
    EmptyBackground,

    #[error("model structure error: {0}")]
    Structure(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Exact enumeration was requested above the configured feature cap.
    #[error("exact enumeration supports at most {cap} features but the model has {k}; use the sampled estimator")]
    ExactCap { k: usize, cap: usize },

    /// Factorial-based weights cannot be represented for this many features.
    #[error("coalition weights overflow for {k} features (limit {cap})")]
    WeightOverflow { k: usize, cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the exact-enumeration feature cap.
    pub fn is_numerical_cap(&self) -> bool {
        matches!(self, Error::ExactCap { .. } | Error::WeightOverflow { .. })
    }
}
