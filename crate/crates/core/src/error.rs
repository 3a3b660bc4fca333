use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ambient dimension {n}^{k} exceeds 2^53")]
    DimensionOverflow { n: u64, k: u32 },

    #[error("sample count rounds to zero (c = {c}, N = {ambient})")]
    EmptySample { c: f64, ambient: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("degenerate sample: level vector (alpha = {alpha}, level = {level}) has zero norm")]
    DegenerateSample { alpha: usize, level: usize },

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("eigensolver did not converge")]
    NoConvergence,

    #[error("eigenpair residual {residual:e} exceeds tolerance {tolerance:e}")]
    EigenResidual { residual: f64, tolerance: f64 },

    #[error("negative eigenvalue {value:e} below clamp tolerance {tolerance:e}")]
    NegativeEigenvalue { value: f64, tolerance: f64 },

    #[error(
        "rank bound violated: expected {expected} structural zeros, atom {value:e} is not one"
    )]
    RankBound { expected: usize, value: f64 },

    #[error("dense materialization needs N = {ambient} <= {cap}")]
    DenseCap { ambient: u64, cap: u64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("column {0} is zero")]
    ZeroColumn(usize),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
