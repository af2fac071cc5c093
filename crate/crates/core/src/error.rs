use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("timestep {t} out of range 1..={max}")]
    StepOutOfRange { t: usize, max: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid mixture: {0}")]
    Mixture(String),

    #[error("invalid bias profile: {0}")]
    Profile(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("csv parse error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
