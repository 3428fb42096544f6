use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown material `{name}` referenced by {field}")]
    UnknownMaterial { name: String, field: String },

    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("out of coverage: {0}")]
    OutOfCoverage(String),

    #[error("rank undefined for an all-zero channel matrix")]
    ZeroMatrix,

    #[error("singular linear system")]
    Singular,

    #[error("curve fit did not converge after {iterations} iterations (best rmse {best_rmse:e})")]
    NonConvergence {
        iterations: usize,
        best: [f64; 4],
        best_rmse: f64,
    },

    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("no overlapping samples between traces")]
    NoOverlap,

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("no valid correlation pairs")]
    NoValidPairs,

    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroMatrix | Error::Singular | Error::NonConvergence { .. }
        )
    }
}
