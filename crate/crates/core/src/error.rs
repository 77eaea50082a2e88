use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("negative inflation margin {0}")]
    NegativeMargin(f64),

    #[error("invalid vehicle input: {0}")]
    InvalidInput(String),

    #[error("invalid automaton configuration: {0}")]
    InvalidMpa(String),

    #[error("unknown automaton state (speed {speed}, steering {steering})")]
    UnknownState { speed: usize, steering: usize },

    #[error("step index {h} outside horizon {horizon}")]
    StepOutOfRange { h: usize, horizon: usize },

    #[error("graph contains a directed cycle")]
    Cyclic,

    #[error("exact partitioning refuses {0} edges (limit {1})")]
    TooManyEdges(usize, usize),

    #[error("vehicle {vehicle} needs the plan of sequential predecessor {predecessor}, which is not available")]
    MissingPlan { vehicle: usize, predecessor: usize },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reach-table cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
