//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("spline basis is rank deficient (column {column})")]
    DegenerateBasis { column: usize },

    #[error("design column {column} is identically zero")]
    ZeroColumn { column: usize },

    #[error(
        "solver did not converge after {iterations} iterations \
         (max change {max_change:.3e}, KKT residual {kkt_residual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        max_change: f64,
        kkt_residual: f64,
    },

    #[error("importance weights underflowed for fold {fold}; increase the number of posterior draws")]
    WeightUnderflow { fold: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: &std::path::Path, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::WeightUnderflow { .. }
                | Error::NonFinite(_)
                | Error::NotPositiveDefinite(_)
                | Error::DegenerateBasis { .. }
        )
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
