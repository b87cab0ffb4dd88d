use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("bisection produced a degenerate half")]
    DegenerateCut,

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("trajectory collides with the barrier; class signature is undefined")]
    CollidingTrajectory,
    #[error("trajectory lengths differ ({0} vs {1}); resample first")]
    LengthMismatch(usize, usize),
    #[error("distributions have different sample counts ({0} vs {1})")]
    UnequalSupport(usize, usize),

    #[error("unsupported barrier size {0}; expected one of 1, 3, 5, 7")]
    UnsupportedSize(u32),
    #[error("action is not finite")]
    NonFiniteAction,
    #[error("state is not finite")]
    NonFiniteState,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("training diverged (non-finite parameters) after {steps} steps")]
    DivergedTraining { steps: u64 },
    #[error("curriculum stage {stage} did not converge within its budget")]
    StageBudgetExhausted { stage: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("search budget exhausted: {0}")]
    BudgetExhausted(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("malformed file {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
