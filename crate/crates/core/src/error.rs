use thiserror::Error;

/// Errors produced by the scoring, curation, metric and loss routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("prompt parse failure: {0}")]
    PromptParse(String),

    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBox(_) => "invalid_box",
            Error::InvalidTrajectory(_) => "invalid_trajectory",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyInput(_) => "empty_input",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::Degenerate(_) => "degenerate_input",
            Error::OutOfRange(_) => "out_of_range",
            Error::PromptParse(_) => "prompt_parse",
            Error::NonFinite { .. } => "non_finite",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
