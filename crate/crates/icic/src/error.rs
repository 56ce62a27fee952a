//! Crate-wide error type.
//!
//! Numerical routines distinguish three failure families so callers can map
//! them to meaningful exit codes:
//!
//! * [`Error::Domain`] — an argument is outside the mathematical domain of
//!   the routine (programming error or bad derived quantity),
//! * [`Error::Config`] — a user-supplied configuration is inconsistent,
//! * [`Error::NonConvergence`] — an iterative routine exhausted its budget.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the simulator and its numerical kernels.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical routine.
    #[error("domain error: {0}")]
    Domain(String),

    /// A scenario or experiment configuration is inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An adaptive or iterative routine failed to reach its tolerance.
    #[error("failed to converge: {0}")]
    NonConvergence(String),

    /// A set of direction vectors did not span the expected space.
    #[error("rank-deficient vector set: {0}")]
    RankDeficient(String),
}

impl Error {
    /// Process exit code associated with this error kind.
    ///
    /// Configuration problems exit with 2, numerical non-convergence with 3,
    /// anything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NonConvergence(_) => 3,
            _ => 1,
        }
    }
}
