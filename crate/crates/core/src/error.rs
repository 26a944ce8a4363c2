use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("Hurst parameter {0} outside [1/2, 1)")]
    InvalidHurst(f64),

    #[error("invalid covariance model: {0}")]
    InvalidCovariance(String),

    #[error("Gram matrix is not positive semidefinite (pivot {pivot}, residual {residual:e})")]
    FactorizationFailure { pivot: usize, residual: f64 },

    #[error(
        "circulant embedding not PSD: min eigenvalue {min_eigenvalue:e} vs max {max_eigenvalue:e}"
    )]
    EmbeddingNotPSD {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("entry paths do not share one grid (entry {entry})")]
    GridMismatch { entry: usize },

    #[error("expected {expected} entry paths, got {got}")]
    EntryCount { expected: usize, got: usize },

    #[error("offset matrix is not symmetric at ({row}, {col})")]
    NonSymmetricOffset { row: usize, col: usize },

    #[error("offset matrix is not Hermitian at ({row}, {col})")]
    NonHermitianOffset { row: usize, col: usize },

    #[error("eigenvalues are not strictly decreasing at index {index}")]
    SimplexViolation { index: usize },

    #[error("non-positive scale {0}")]
    InvalidScale(f64),

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal {off_diagonal:e}){}", node_suffix(*.node))]
    NoConvergence {
        sweeps: usize,
        off_diagonal: f64,
        node: Option<usize>,
    },

    #[error("decomposition is not very good{}: {reason}", node_suffix(*.node))]
    NotVeryGood { node: Option<usize>, reason: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("eigenvalue gap {gap:e} below tolerance at node {node} (pair {pair:?})")]
    GapBelowTolerance {
        node: usize,
        pair: (usize, usize),
        gap: f64,
    },

    #[error("eigenvalue ordering violated at node {node}; refine the grid")]
    OrderingViolated { node: usize },

    #[error("resolution {requested} does not divide native resolution {native}")]
    ResolutionMismatch { requested: usize, native: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("negative moment order q = {0} must be below 2")]
    QTooLarge(f64),

    #[error("invalid configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

fn node_suffix(node: Option<usize>) -> String {
    node.map(|m| format!(" at node {m}")).unwrap_or_default()
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
