use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid region set: {0}")]
    InvalidRegions(String),

    #[error("region [{lo}, {hi}] Hz lies outside the sampled band [-{nyquist}, {nyquist}] Hz")]
    RegionOutOfBand { lo: f64, hi: f64, nyquist: f64 },

    #[error("infeasible perturbation: K_A * delta_A = {0} must be below 1")]
    InfeasiblePerturbation(f64),

    #[error("perturbation profile does not conserve power: K-weighted sum = {0}")]
    PowerNotConserved(f64),

    #[error("field too short for PSD estimation: {len} samples, need at least {min}")]
    FieldTooShort { len: usize, min: usize },

    #[error("region is empty after shrinking to the inner fraction")]
    EmptyRegion,

    #[error("trace [{trace_lo}, {trace_hi}] Hz does not cover region [{lo}, {hi}] Hz")]
    RegionNotCovered {
        lo: f64,
        hi: f64,
        trace_lo: f64,
        trace_hi: f64,
    },

    #[error("incomplete delta_A grid: {0}")]
    IncompleteGrid(String),

    #[error("not enough training rows: have {have}, need at least {need}")]
    TooFewRows { have: usize, need: usize },

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("empty test set")]
    EmptyTestSet,

    #[error("invalid margin query: {0}")]
    InvalidMargin(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
