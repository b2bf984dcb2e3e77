use thiserror::Error;

/// Errors produced anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent configuration / inputs.
    #[error("validation error: {0}")]
    Validation(String),

    /// An iterative method ran out of iterations.
    #[error("{what} did not converge (last residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },

    /// Breakdown or non-finite values inside a numerical kernel.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The input does not satisfy an operation's precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line front end:
    /// 2 for configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Validation(_)
            | Error::Precondition(_)
            | Error::Json(_)
            | Error::Io(_) => 2,
            Error::NonConvergence { .. } | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
