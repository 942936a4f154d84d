use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input failed validation. `path` names the offending parameter,
    /// using the dotted config path where one exists (`sweep.L`).
    #[error("invalid `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("grid too coarse: {detail} (need at least {required_points} points)")]
    Resolution { detail: String, required_points: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gain overflow: G*sqrt(lambda_1) = {argument:.3} exceeds {limit}; lower G or use a coarser eigenvalue floor")]
    Overflow { argument: f64, limit: f64 },

    #[error("need at least {needed} peaks, found {found}")]
    InsufficientPeaks { needed: usize, found: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } => 1,
            Error::Resolution { .. }
            | Error::Numerical(_)
            | Error::Overflow { .. }
            | Error::InsufficientPeaks { .. } => 2,
            Error::Io { .. } => 3,
        }
    }
}

/// Reject non-finite or non-positive values.
pub(crate) fn require_positive(path: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::validation(path, format!("must be finite and > 0, got {value}")));
    }
    Ok(())
}

pub(crate) fn require_non_negative(path: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::validation(path, format!("must be finite and >= 0, got {value}")));
    }
    Ok(())
}
