use thiserror::Error;

/// Errors shared across the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("node index {0} out of range for graph on {1} nodes")]
    NodeOutOfRange(usize, usize),

    #[error("edge endpoints must differ, got ({0}, {1})")]
    SelfLoop(usize, usize),

    #[error("matrix is not positive definite (leading minor {0} failed)")]
    NotPositiveDefinite(usize),

    #[error("degrees of freedom must exceed 2, got {0}")]
    BadDegreesOfFreedom(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "G-Wishart fixed point did not converge after {sweeps} sweeps (residual {residual:.3e})"
    )]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("rate matrix entry D_pp must be positive, got {0}")]
    NonPositiveRate(f64),

    #[error("graph is not decomposable: atom {0:?} is incomplete")]
    NotDecomposable(Vec<usize>),

    #[error("precision matrix does not conform to the graph pattern at ({0}, {1})")]
    PatternViolation(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
