//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building problems, integrating the
/// final value problems, or evaluating solutions.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Incompatible matrix/vector dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A coefficient that must be symmetric positive definite failed its
    /// Cholesky factorization at a specific time.
    #[error("coefficient {name} not positive definite at t = {t}")]
    NotPositiveDefinite { name: String, t: f64 },

    /// A terminal quadratic is not positive semi-definite.
    #[error(
        "terminal piece {piece} is not positive semi-definite \
         (smallest eigenvalue {min_eigenvalue:e})"
    )]
    NotPositiveSemiDefinite { piece: usize, min_eigenvalue: f64 },

    /// Problem data violates a construction invariant.
    #[error("invalid problem: {field}: {message}")]
    Validation { field: String, message: String },

    /// The integrator produced a non-finite value. For Riccati solves this
    /// signals finite-time escape, i.e. data for which no global solution
    /// exists.
    #[error("blow-up at t = {t} (step {step}{})",
            piece.map(|p| format!(", piece {p}")).unwrap_or_default())]
    BlowUp {
        step: usize,
        t: f64,
        piece: Option<usize>,
    },

    /// A query time outside the stored span.
    #[error("time {t} outside [{t_start}, {t_end}]")]
    TimeOutOfRange { t: f64, t_start: f64, t_end: f64 },

    /// A 1-based piece index outside 1..=m.
    #[error("piece index {piece} outside 1..={count}")]
    PieceOutOfRange { piece: usize, count: usize },

    /// A time that must land on a grid node does not.
    #[error("grid misalignment: {0}")]
    GridMisalignment(String),

    /// The five-point time-derivative stencil does not fit around a node.
    #[error("stencil out of bounds at node {node} of 0..={last}")]
    StencilOutOfBounds { node: usize, last: usize },

    /// A problem configuration document could not be parsed. The path points
    /// at the offending JSON field.
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    /// The problem uses a custom coefficient callable and cannot be written
    /// to the JSON schema.
    #[error("not representable in the config schema: {0}")]
    Unrepresentable(String),

    /// A verification check did not meet its threshold.
    #[error("check '{check}' failed: {detail}")]
    CheckFailed { check: String, detail: String },

    /// Filesystem or formatting failure while writing outputs.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
