use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid flux model: {0}")]
    InvalidModel(String),

    #[error("model has no coercivity parameters")]
    MissingCoercivity,

    #[error("growth exponent is infinite; polynomial growth check does not apply")]
    InfiniteGrowth,

    #[error("CFL violated: dt = {dt} exceeds admissible {max_dt}")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("synchronised below resolution at t = {hit_time}")]
    SynchronisedBelowResolution { hit_time: f64 },

    #[error("monotonicity violated in kernel column {column}: value {value} at cell {cell}")]
    MonotonicityViolation { column: usize, cell: usize, value: f64 },

    #[error("pilot too short: {found} excursions, need at least {needed}")]
    PilotTooShort { found: usize, needed: usize },

    #[error("invalid center sets: {0}")]
    InvalidCenters(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("snapshot decode error: {0}")]
    Snapshot(String),
}
