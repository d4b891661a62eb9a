use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-positive bitwidth {value} at policy dimension {dim}")]
    NonPositiveBitwidth { dim: usize, value: f64 },

    #[error("bitwidth {value} at policy dimension {dim} is outside (0, 32]")]
    BitwidthOutOfRange { dim: usize, value: f64 },

    #[error("policy value {value} at dimension {dim} is not on its grid")]
    OffGrid { dim: usize, value: f64 },

    #[error("policy value {value} at dimension {dim} is outside [{lo}, {hi}]")]
    OutOfBounds { dim: usize, value: f64, lo: f64, hi: f64 },

    #[error("non-finite input at dimension {dim}")]
    NonFinite { dim: usize },

    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("perturbation magnitude b0 must be positive, got {0}")]
    NonPositiveB0(f64),

    #[error("requested {requested} perturbations but only {available} are usable")]
    TooFewPerturbations { requested: usize, available: usize },

    #[error("no usable perturbations for this policy")]
    NoPerturbations,

    #[error("empty dataset")]
    EmptyData,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("complexity {complexity} G reaches the budget {budget} G")]
    Infeasible { complexity: f64, budget: f64 },

    #[error("budget {budget} G is below the minimal grid complexity {min_complexity} G")]
    InfeasibleBudget { budget: f64, min_complexity: f64 },

    #[error("initial policy complexity {complexity} G is not below the budget {budget} G")]
    InfeasibleInit { complexity: f64, budget: f64 },

    #[error("target complexity band [{lo}, {hi}] G is unreachable for this space")]
    InfeasibleBand { lo: f64, hi: f64 },

    #[error("space yields only {available} distinct policies, {requested} requested")]
    SpaceExhausted { requested: usize, available: usize },

    #[error("policy not present in the replay dataset")]
    UnknownPolicy,

    #[error("conflicting labels for a duplicated policy at row {row}")]
    ConflictingLabel { row: usize },

    #[error("oracle failed on policy {policy:?}: {source}")]
    Oracle {
        policy: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("accuracy {0} is outside [0, 1]")]
    AccuracyRange(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed record: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
