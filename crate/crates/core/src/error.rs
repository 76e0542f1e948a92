use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no data")]
    NoData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dynamics diverged")]
    DynamicsDiverged,

    #[error("dynamics diverged during task {0}")]
    TaskDiverged(String),

    #[error("training diverged")]
    TrainingDiverged,

    #[error("no viable samples")]
    NoViableSamples,

    #[error("demonstration too short: {len} ticks cannot be split into {segments} segments")]
    DemoTooShort { len: usize, segments: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("stage `{stage}` is missing its prerequisite {} (run `{producer}` first)", path.display())]
    MissingPrerequisite {
        stage: &'static str,
        producer: &'static str,
        path: PathBuf,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Short stable identifier, used in the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NoData => "no_data",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DynamicsDiverged | Error::TaskDiverged(_) => "dynamics_diverged",
            Error::TrainingDiverged => "training_diverged",
            Error::NoViableSamples => "no_viable_samples",
            Error::DemoTooShort { .. } => "demo_too_short",
            Error::Invalid(_) => "invalid_argument",
            Error::MissingPrerequisite { .. } => "missing_prerequisite",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Toml(_) => "config",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
