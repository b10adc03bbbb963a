use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum PcrError {
    /// An argument was outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A data record was unusable; carries enough context to find it.
    #[error("data error at sample {index}: {message}")]
    Data { index: usize, message: String },

    /// An iteration failed to converge or produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl PcrError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        PcrError::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        PcrError::Numerical(msg.into())
    }
}
