//! Error taxonomy shared by all modules.
//!
//! Exit-code mapping in the CLI: configuration/validation problems map to 1,
//! numerical failures (singular systems, non-convergent solves) map to 2.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector dimension violates an operation's contract.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// An input value violates an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration field is missing, unknown, or out of range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Explicit codebook enumeration is capped at 2^24 entries.
    #[error(
        "codebook capacity exceeded: {bits} bits needs 2^{bits} codewords (cap 2^24); \
         use emulate_rvq_error for a statistical stand-in"
    )]
    CodebookCapacity { bits: u32 },

    /// Covariance statistics too degenerate for the requested construction.
    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    /// Quadrature failed its self-consistency check.
    #[error("quadrature did not converge: residual {residual:.3e} exceeds {limit:.1e}")]
    Integration { residual: f64, limit: f64 },

    /// A linear system is numerically singular.
    #[error("matrix numerically singular: condition number {condition:.3e} exceeds {limit:.1e}")]
    Singular { condition: f64, limit: f64 },

    /// An iterative solve failed to converge or produced inconsistent results.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A Monte Carlo trial failed; carries the trial index for diagnostics.
    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches a trial index to an error propagating out of a trial body.
    pub fn in_trial(self, trial: u64) -> Self {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }

    /// True for errors that should map to CLI exit code 1 (configuration).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::InvalidDimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
