//! Crate-wide error type.
//!
//! Numerical routines in this crate refuse to guess: branch-cut violations,
//! rank decisions without a clear singular-value gap, and flag selections
//! without a clear nearest candidate all surface as dedicated variants
//! instead of silently picking an answer.

use thiserror::Error;

/// Errors produced by the periph library.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix that must be invertible is numerically singular.
    #[error("matrix is numerically singular (|det| = {abs_det:.3e})")]
    Singular { abs_det: f64 },

    /// The eigenvalue iteration did not reach working precision.
    #[error("eigenvalue iteration failed to converge (max polynomial residual {residual:.3e})")]
    EigenNonConvergence { residual: f64 },

    /// A rank/nullity decision lacked the required relative singular-value gap.
    #[error(
        "ambiguous rank: singular values straddle the threshold without a 1e3 gap \
         (kept {above:.3e}, dropped {below:.3e})"
    )]
    AmbiguousRank { above: f64, below: f64 },

    /// Input lies outside the branch-safe region of a multivalued map.
    #[error("branch ambiguity: {0}")]
    BranchAmbiguity(String),

    /// No determinant-1 scaling of the candidate is close to the reference.
    #[error(
        "no determinant-1 scaling lies within max-entry distance 0.5 of the reference \
         (best candidate at {best:.3})"
    )]
    LiftAmbiguity { best: f64 },

    /// An operation required a regular matrix (one Jordan block per eigenvalue).
    #[error("matrix is not regular: {0}")]
    NotRegular(String),

    /// A flag or decoration failed its invariance / triangularization check.
    #[error("decoration mismatch: {0}")]
    DecorationMismatch(String),

    /// Two candidate flags are equally close to the reference.
    #[error("ambiguous flag selection: two flags within tolerance {tol:.3e} of the reference")]
    FlagTie { tol: f64 },

    /// The deformation solver ran out of iterations.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The solver's Jacobian lost column rank: the target sits at or across
    /// the ramification locus of the eigenvalue chart.
    #[error("ramification: solver Jacobian rank collapse ({detail})")]
    Ramification { detail: String },

    /// A continuation path failed at a specific segment after step halving.
    #[error("continuation failed at target index {index}: {source}")]
    Continuation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed caller input (dimensions, tolerances, configuration).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A word string failed to parse against the presentation's generators.
    #[error("word parse error: {0}")]
    WordParse(String),

    /// Embedded corpus data failed its checksum or validation.
    #[error("corpus integrity: {0}")]
    CorpusIntegrity(String),

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Filesystem failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for computation failures, 2 for
    /// data-integrity problems (bad inputs, corrupted corpus, IO).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_)
            | Error::WordParse(_)
            | Error::CorpusIntegrity(_)
            | Error::Json(_)
            | Error::Io(_) => 2,
            _ => 1,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
