//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while importing, solving, or optimizing.
#[derive(Debug, Error)]
pub enum Error {
    /// Input text could not be parsed. Carries the 1-based source line.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A structurally valid input carried values that violate a model
    /// invariant (nonpositive reactance, bad bus reference, ...).
    #[error("invalid grid data: {0}")]
    Data(String),

    /// A serialized document did not match the expected schema.
    #[error("schema error: {path}: {message}")]
    Schema { path: String, message: String },

    /// The grid graph (possibly after removing outaged lines) is not
    /// connected, so the DC power-flow system has no unique solution.
    #[error("grid is not connected{0}")]
    Disconnected(String),

    /// Injections do not sum to zero within tolerance.
    #[error("injections unbalanced: |sum| = {imbalance:.3e} exceeds tolerance {tolerance:.3e}")]
    Unbalanced { imbalance: f64, tolerance: f64 },

    /// The reduced Laplacian lost positive definiteness during
    /// factorization; usually a sign of zero line weights or a
    /// disconnection that slipped past validation.
    #[error("reduced system is singular (nonpositive pivot at elimination step {pivot})")]
    Singular { pivot: usize },

    /// Every line flow is zero, so no finite scaling can create an
    /// overload and the critical scaling is undefined.
    #[error("all line flows are zero; critical scaling is undefined")]
    Unstressable,

    /// The base dispatch problem has no feasible solution.
    #[error("no feasible dispatch: {0}")]
    InfeasibleDispatch(String),

    /// A numerical procedure broke down (LP pivot breakdown, residual
    /// check failure). Distinct from an LP that is proven infeasible,
    /// which is reported through `LpStatus`.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A precondition on a function argument was violated.
    #[error("{0}")]
    Invalid(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Underlying JSON failure (wrapping serde_json).
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Convenience constructor for parse errors.
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Convenience constructor for schema errors.
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
