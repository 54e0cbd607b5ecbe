use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cycle: period {period} must exceed idle span {idle_span} by at least 1e-9")]
    DegenerateCycle { period: f64, idle_span: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("node {node} infeasible: {constraint}")]
    Infeasible { node: usize, constraint: Constraint },

    #[error("reward {reward} outside leader regime (0, {upper})")]
    OutOfRegime { reward: f64, upper: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("replay buffer holds {held} transitions, batch needs {wanted}")]
    Underfilled { held: usize, wanted: usize },

    #[error("shard sizes sum to {requested} but only {available} samples exist")]
    Oversubscribed { requested: usize, available: usize },

    #[error("empty shard")]
    EmptyShard,

    #[error("aggregation weights are all zero")]
    ZeroWeights,

    #[error("non-finite action for agent {agent}")]
    NonFinite { agent: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("scenario field `{field}`: {reason}")]
    Scenario { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Which constraint emptied a node's feasible interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Aoi,
    Latency,
    Bounds,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Constraint::Aoi => write!(f, "max tolerable AoI"),
            Constraint::Latency => write!(f, "max tolerable service latency"),
            Constraint::Bounds => write!(f, "update-period bounds"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam { name, reason: reason.into() }
}
