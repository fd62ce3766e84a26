use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver and its kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: line {line}: {msg}")]
    Ingestion {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Cholesky failed on a matrix that must be SPD.
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// A projected block lost definiteness; the search space picked up a
    /// component of the generalized nullspace.
    #[error("projected {block} block is not SPD (pivot {pivot} = {value:e}); nullspace leaked into the search space")]
    NullspaceLeak {
        block: &'static str,
        pivot: usize,
        value: f64,
    },

    #[error("degenerate projected spectrum: singular value {sigma:e} below {threshold:e}")]
    DegenerateSpectrum { sigma: f64, threshold: f64 },

    #[error("nullspace rank mismatch: expected {expected}, detected {detected}")]
    RankMismatch { expected: usize, detected: usize },

    #[error("invalid nullspace basis: {0}")]
    InvalidNullspace(String),

    #[error("initialization failure: only {kept} of {required} search columns survived biorthogonalization")]
    InitializationFailure { kept: usize, required: usize },

    #[error("not enough samples for regression: {0}")]
    NotEnoughSamples(String),

    #[error("numerical abort: {0}")]
    NumericalAbort(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { op, expected, got });
    }
    Ok(())
}
