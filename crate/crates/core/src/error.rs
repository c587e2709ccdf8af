use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is singular for a negative power (eigenvalue {eigenvalue:e} at or below floor)")]
    Singular { eigenvalue: f64 },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("series too short: {rows} rows, need at least {required}")]
    TooShort { rows: usize, required: usize },

    #[error("lag Gram matrix is numerically singular")]
    SingularGram,

    #[error("rank {d} out of range 1..={max}")]
    BadRank { d: usize, max: usize },

    #[error("invalid dimensions: {0}")]
    BadDims(String),

    #[error("basis is not semiorthogonal (max deviation {deviation:e})")]
    NotSemiorthogonal { deviation: f64 },

    #[error("candidate basis makes the envelope objective degenerate")]
    DegenerateCandidate,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero standard error in reference model")]
    ZeroSe,

    #[error("forecast horizon must be at least 1")]
    BadHorizon,

    #[error("could not draw a stationary coefficient matrix in {attempts} attempts")]
    CannotStabilize { attempts: usize },

    #[error("unknown error family `{0}`")]
    BadFamily(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
