use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A configuration value is missing or out of range. `field` names the
    /// offending key as it appears in descriptors and config files.
    #[error("invalid configuration for `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("variance is undefined for a constant series")]
    UndefinedVariance,

    #[error("inconsistent strategy: pdf is zero at a drawn sample")]
    InconsistentStrategy,

    #[error("degenerate integrand: {0}")]
    DegenerateIntegrand(String),

    #[error("divergence: parameter norm {norm} exceeded {limit}")]
    Divergence { norm: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn require_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be a positive finite number, got {value}")))
    }
}
