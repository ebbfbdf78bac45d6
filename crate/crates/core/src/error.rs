//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by library operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem failure while reading or writing `path`.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// CSV cell that could not be parsed, or a ragged row. Row and column are
    /// 1-based and count data rows (a skipped header is not row 1).
    #[error("parse error in {path} at row {row}, column {col}: {message}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        message: String,
    },

    /// A precondition on arguments or configuration was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// AR polynomial has a root on or inside the unit circle.
    #[error("non-stationary AR polynomial: {0}")]
    NonStationary(String),

    /// The iterative eigensolver failed to converge.
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    /// A diagonal spectrum was near zero on too much of the grid for the
    /// coherence ratio to be meaningful.
    #[error(
        "degenerate diagonal spectrum for pair ({a}, {b}): flooring triggered on \
         {fraction:.1}% of grid points"
    )]
    DegenerateSpectrum { a: usize, b: usize, fraction: f64 },

    /// Least-squares regressor matrix was singular at the given VAR order.
    #[error("singular regressor matrix at VAR order {order}")]
    SingularRegressor { order: usize },

    /// A frequency band that contains no grid points.
    #[error("frequency band ({lo}, {hi}) contains no grid frequencies")]
    EmptyBand { lo: f64, hi: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
