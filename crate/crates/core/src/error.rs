use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid duration {0} ms")]
    InvalidDuration(f64),
    #[error("{0} ms has sub-microsecond precision")]
    SubMicrosecond(f64),
    #[error("invalid frame rate {0}")]
    InvalidFps(f64),
    #[error("task set is empty")]
    EmptyTaskSet,
    #[error("duplicate task id {0}")]
    DuplicateTaskId(u32),
    #[error("task {0}: period must be positive")]
    InvalidPeriod(u32),
    #[error("task {id}: invalid WCET profile: {reason}")]
    InvalidProfile { id: u32, reason: &'static str },
    #[error("priority ranks are not a permutation of 0..{0}")]
    InvalidPriorities(usize),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("horizon must be positive")]
    InvalidHorizon,
    #[error("quantum {quantum} does not divide {what}")]
    QuantumMismatch { quantum: u64, what: String },
    #[error("motion state must have positive size")]
    NonPositiveSize,
    #[error("appearance vectors must be non-zero and of equal dimension")]
    InvalidAppearance,
    #[error("category {0} requires an observation")]
    MissingObservation(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("frame {frame} is outside the scenario horizon {horizon}")]
    FrameOutOfRange { frame: u64, horizon: u64 },
    #[error("unknown policy '{0}'")]
    UnknownPolicy(String),
    #[error("invalid execution-time model '{0}'")]
    InvalidExecModel(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
