use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or observation lies outside the family's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value failed validation; `field` names the offending key.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The policy was driven out of protocol (probe/observation mismatch, use after stop).
    #[error("policy state error: {0}")]
    State(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
