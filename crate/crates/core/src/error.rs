use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("input too short: {0}")]
    InputTooShort(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged: {0}")]
    TrainingDiverged(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("variant error: {0}")]
    Variant(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error in {field}: {msg}")]
    Format { field: String, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("missing prerequisite {path} (run stage `{stage}` first)")]
    MissingPrerequisite { stage: String, path: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Configuration problems map to a distinct process exit code in the CLI.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
