use thiserror::Error;

#[derive(Debug, Error)]
pub enum QstError {
    #[error("degenerate Fock space: {photons} photons in {ports} ports")]
    DegenerateSpace { photons: usize, ports: usize },

    #[error("occupation {0:?} is not part of the basis")]
    OccupationNotFound(Vec<u32>),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not unitary (||U^dag U - I||_F = {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record is already restricted to click events")]
    AlreadyRestricted,

    #[error("unknown solver `{0}`")]
    UnknownSolver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, QstError>;
