//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: bad indices, dimension mismatches, invalid
    /// configuration values. Maps to exit code 2 in the CLI.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Structurally valid input that is numerically degenerate (e.g. a
    /// constant design column).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A matrix that must be (strictly) positive definite is not, beyond the
    /// documented tolerances. Maps to exit code 1 in the CLI.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// The penalized-regression solver hit its iteration cap.
    #[error("solver did not converge at lambda = {lambda}: {detail}")]
    SolverDiverged { lambda: f64, detail: String },

    /// A parameter is outside the supported range of a numerical routine.
    #[error("domain error: {0}")]
    Domain(String),

    /// A request whose exact evaluation would be too expensive (e.g. direct
    /// path enumeration for large k0).
    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),
}

impl Error {
    /// Whether the error reflects bad user input (CLI exit 2) rather than an
    /// internal numerical failure (CLI exit 1).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Degenerate(_)
                | Error::Domain(_)
                | Error::CostGuard(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
