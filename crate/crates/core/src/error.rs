//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vector is not unit-norm: |norm - 1| = {0:.3e}")]
    NotUnitNorm(f64),

    #[error("all atoms pruned; decomposition is empty")]
    EmptyDecomposition,

    #[error("solver diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("normal equations are inconsistent (residual {residual:.3e}); no certificate exists")]
    InconsistentSystem { residual: f64 },

    #[error("estimate has fewer atoms ({est}) than the reference ({truth}) after pruning")]
    Unmatched { est: usize, truth: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} file {path}: {detail}")]
    Format {
        format: &'static str,
        path: String,
        detail: String,
    },
}
