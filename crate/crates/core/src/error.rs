use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid distribution ({what}): {detail}")]
    InvalidDistribution { what: &'static str, detail: String },

    #[error("reward {value} at ({state}, {action}) outside [0, 1]")]
    RewardOutOfRange {
        state: usize,
        action: usize,
        value: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{} state-action pair(s) have no data: {missing:?}", missing.len())]
    CoverageViolation { missing: Vec<(usize, usize)> },

    #[error("support violation at index {index}: p > 0 where q = 0")]
    SupportViolation { index: usize },

    #[error("state {state} is visited by the policy but has no data")]
    UncoveredState { state: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("transition {index} of the unlabeled set carries a reward")]
    LabeledInUnlabeled { index: usize },

    #[error("transition {index} of the labeled set has no reward")]
    UnlabeledInLabeled { index: usize },

    #[error("missing context for strategy `{strategy}`: {needs}")]
    MissingContext {
        strategy: &'static str,
        needs: &'static str,
    },

    #[error("supports are disjoint; the product distribution is identically zero")]
    DisjointSupport,

    #[error("optimizer did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("linear system is singular")]
    Singular,

    #[error("no records to aggregate")]
    NoRecords,

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
