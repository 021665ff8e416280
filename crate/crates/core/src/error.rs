use thiserror::Error;

use crate::config_space::ConfigId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knob `{name}`: {reason}")]
    InvalidKnob { name: String, reason: String },

    #[error("duplicate knob name `{0}`")]
    DuplicateKnob(String),

    #[error("configuration does not conform to the knob space: {0}")]
    NonConforming(String),

    #[error("workload must be non-empty")]
    EmptyWorkload,

    #[error("duplicate query id `{0}`")]
    DuplicateQuery(String),

    #[error("query `{id}` has nonpositive default cost {cost}")]
    NonPositiveCost { id: String, cost: f64 },

    #[error("query `{0}` has no default_cost and no executor was available to measure it")]
    MissingCost(String),

    #[error("unknown query `{0}`")]
    UnknownQuery(String),

    #[error("unknown configuration {0}")]
    UnknownConfig(ConfigId),

    #[error("no labeled configurations")]
    NoLabeled,

    #[error("budget below minimum query cost (budget {budget}, cheapest query {min_cost})")]
    BudgetBelowMinCost { budget: f64, min_cost: f64 },

    #[error("compression ratio {0} outside [0, 1)")]
    InvalidRatio(f64),

    #[error("latency for query {query} under {config} must be positive, got {latency}")]
    NonPositiveLatency {
        query: usize,
        config: ConfigId,
        latency: f64,
    },

    #[error(
        "conflicting history cell (query {query}, {config}): stored {stored}, new {new}"
    )]
    ConflictingCell {
        query: usize,
        config: ConfigId,
        stored: f64,
        new: f64,
    },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("training set mismatch: {0}")]
    TrainingMismatch(String),

    #[error("global surrogate is not fitted yet")]
    NoSurrogate,

    #[error("evaluation request must name at least one query")]
    EmptyRequest,

    #[error("controller transport error: {0}")]
    Transport(std::io::Error),

    #[error("controller protocol error: {0}")]
    Protocol(String),

    #[error("invalid session configuration: {0}")]
    InvalidSession(String),

    #[error("budget {budget}s is too small for the default measurement ({needed}s)")]
    BudgetTooSmall { budget: f64, needed: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
