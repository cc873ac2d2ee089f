use thiserror::Error;

/// Errors surfaced by the library.
///
/// The CLI maps these onto its exit-code contract: validation-class errors
/// exit 2, I/O-class errors exit 3, diagnostic failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape disagreement between inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter outside its valid domain (nonpositive epsilon, L > U, ...).
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Inputs that parse but violate a contract (wrong mechanism for an
    /// estimator, malformed CSV cell, inconsistent metadata).
    #[error("validation error: {0}")]
    Validation(String),

    /// A sampler or numerical routine finished but its diagnostics indicate
    /// the result should not be trusted.
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    /// A numerical routine failed outright (no convergence, Cholesky failure).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code for the CLI: 2 validation, 3 I/O, 4 diagnostic.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_) | Error::InvalidParam(_) | Error::Validation(_) | Error::Config(_) => {
                2
            }
            Error::Io(_) => 3,
            Error::Csv(e) => {
                if e.is_io_error() {
                    3
                } else {
                    2
                }
            }
            Error::Json(e) => {
                if e.is_io() {
                    3
                } else {
                    2
                }
            }
            Error::Diagnostic(_) | Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
