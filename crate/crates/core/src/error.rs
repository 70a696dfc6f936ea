use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrilError {
    #[error("response has {y_len} entries but design has {x_rows} rows")]
    LengthMismatch { y_len: usize, x_rows: usize },

    #[error("need at least 2 observations and 1 predictor (got n={n}, p={p})")]
    TooSmall { n: usize, p: usize },

    #[error("non-finite value encountered ({0})")]
    NonFinite(String),

    #[error("predictor column {0} has zero variance")]
    ZeroVarianceColumn(usize),

    #[error("predictors {0} and {1} are near duplicates (|rho| too close to 1)")]
    NearDuplicatePredictors(usize, usize),

    #[error("dimension too small: {0}")]
    DimensionTooSmall(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("LARS tie between variables {0} and {1} could not be resolved")]
    DegenerateStep(usize, usize),

    #[error("path exceeded {0} steps")]
    MaxStepsExceeded(usize),

    #[error("coordinate descent did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("every adaptive weight is infinite")]
    WeightAllInfinite,

    #[error("design is not equi-correlated (max deviation {0:e})")]
    NotEquiCorrelated(f64),

    #[error("support set is empty")]
    SupportEmpty,

    #[error("Q beta* is identically zero")]
    ZeroQBeta,

    #[error("n={0} is too small for the simulation layout")]
    NTooSmall(usize),

    #[error("cannot lay out 3q={needed} nonzero coefficients in p={p} slots")]
    LayoutImpossible { p: usize, needed: usize },

    #[error("every tuning cell failed: {0}")]
    AllCellsFailed(String),

    #[error("too many failed replications ({failed} of {total})")]
    TooManyFailures { failed: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for GrilError {
    fn from(e: std::io::Error) -> Self {
        GrilError::Io(e.to_string())
    }
}

impl From<csv::Error> for GrilError {
    fn from(e: csv::Error) -> Self {
        GrilError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GrilError>;
