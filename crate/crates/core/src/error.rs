use thiserror::Error;

/// Errors emitted by matrix construction, kernels, factorization and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),

    #[error("invalid stencil grid: {0}")]
    InvalidGrid(String),

    #[error("unknown problem id {0:?}")]
    UnknownProblem(String),

    #[error("scale factor must be nonzero and finite, got {0}")]
    InvalidScale(f64),

    #[error("row {0} has no stored diagonal entry")]
    MissingDiagonal(usize),

    #[error("sparsity pattern is not symmetric: entry ({0},{1}) has no transpose partner")]
    UnsymmetricPattern(usize, usize),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("solver input invalid: {0}")]
    InvalidInput(String),

    #[error("replacement policy invalid: {0}")]
    InvalidPolicy(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
