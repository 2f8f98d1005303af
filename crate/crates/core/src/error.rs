use thiserror::Error;

/// Errors raised by the solver, the optimizer and the command-line layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value produced by the {solver} solver at step {step}")]
    NonFinite { solver: &'static str, step: usize },

    #[error("state became negative ({min_value:e}) at step {step}, below the threshold {threshold:e}")]
    Positivity {
        step: usize,
        min_value: f64,
        threshold: f64,
    },

    #[error("window [{x_lo}, {x_hi}] contains no cell centre")]
    EmptyWindow { x_lo: f64, x_hi: f64 },

    #[error("line search stalled after {backtracks} backtracks (last step {eta:e})")]
    LineSearchStalled { backtracks: usize, eta: f64 },

    #[error("{0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used in the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite { .. } => "non_finite",
            Error::Positivity { .. } => "positivity",
            Error::EmptyWindow { .. } => "empty_window",
            Error::LineSearchStalled { .. } => "line_search_stalled",
            Error::Degenerate(_) => "degenerate",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}
