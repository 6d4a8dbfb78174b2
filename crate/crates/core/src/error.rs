use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no scene satisfying the minimum separation after {attempts} draws")]
    SeparationBudgetExhausted { attempts: usize },

    #[error("matrix is not Hermitian (defect {defect:.3e} > {tol:.1e})")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("problem too large: block of size {size} exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("packing map inconsistency: {0}")]
    Packing(String),

    #[error("invalid conic problem: {0}")]
    InvalidProblem(String),

    #[error("equality system is rank deficient: {0}")]
    RankDeficientEqualities(String),

    #[error("eigendecomposition failed on a block of size {0}")]
    Eigen(usize),

    #[error("evaluation grid {got:?} is smaller than the alias-free minimum {need:?}")]
    GridTooSmall { got: [usize; 3], need: [usize; 3] },

    #[error("found {found} peaks above the floor, expected {wanted}")]
    TooFewPeaks { found: usize, wanted: usize },

    #[error("least-squares system is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficientSystem { rank: usize, cols: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
