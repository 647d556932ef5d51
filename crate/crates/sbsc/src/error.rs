//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix column has (near-)zero norm and cannot be normalized.
    #[error("column {0} has norm below 1e-12 and cannot be normalized")]
    ZeroColumn(usize),
    /// A synthetic-data spec violates its invariants.
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    /// A dataset file failed to parse; the payload is the 1-based line
    /// number, with 0 meaning the file as a whole (e.g. empty).
    #[error("parse error at line {0}")]
    ParseError(usize),
    /// The neighbor count is outside `1..=N-1`.
    #[error("d_max = {d_max} outside valid range 1..={max}")]
    BadDmax {
        /// Requested neighbor count.
        d_max: usize,
        /// Largest admissible value (N-1).
        max: usize,
    },
    /// Ground-truth labels were required but absent.
    #[error("ground-truth labels are required but absent")]
    MissingLabels,
    /// A non-finite value reached a numeric kernel.
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    /// A sub-cluster block has no eigenvalue above tolerance.
    #[error("sub-cluster {0} is degenerate: no eigenvalue above tolerance")]
    DegenerateSubcluster(usize),
    /// A sparsification threshold is outside `1..=n`.
    #[error("t_max = {t_max} outside valid range 1..={n}")]
    BadThreshold {
        /// Requested per-row survivor count.
        t_max: usize,
        /// Matrix order.
        n: usize,
    },
    /// The symmetric eigensolver did not converge.
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
    /// A label class has no training points.
    #[error("class {0} has no training points")]
    EmptyClass(usize),
    /// Two vectors that must agree in length do not.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch {
        /// Length of the first argument.
        left: usize,
        /// Length of the second argument.
        right: usize,
    },
    /// A bound evaluator's numeric preconditions failed.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    /// Constants handed to a bound evaluator are inadmissible.
    #[error("bad constants: {0}")]
    BadConstants(String),
    /// Pipeline parameters are invalid for the given dataset.
    #[error("bad parameters: {0}")]
    BadParams(String),
    /// A configuration file or override could not be interpreted.
    #[error("config error: {0}")]
    Config(String),
    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
