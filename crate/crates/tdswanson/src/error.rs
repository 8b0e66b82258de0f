use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid Fock dimension {dim}: need at least {min}")]
    InvalidDimension { dim: usize, min: usize },

    #[error("infeasible domain: {0}")]
    InfeasibleDomain(String),

    #[error("infeasible metric state: {0}")]
    InfeasibleState(String),

    #[error("degenerate metric state: {0}")]
    DegenerateState(String),

    #[error("time {t} outside scenario domain [{t0}, {t1}]")]
    OutOfDomain { t: f64, t0: f64, t1: f64 },

    #[error("singular flow at t = {t}: {reason}")]
    SingularFlow { t: f64, reason: String },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepFailure { t: f64, h: f64 },

    #[error("squeeze magnitude fell below the floor at t = {t} (r = {r:e})")]
    SqueezeSingularity { t: f64, r: f64 },

    #[error("truncation insufficient: defect {defect:e} exceeds {threshold:e}")]
    Truncation { defect: f64, threshold: f64 },

    #[error("invalid scenario at `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("branch error: {0}")]
    Branch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
