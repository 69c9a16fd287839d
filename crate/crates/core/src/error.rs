//! Error type shared by every stage of the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input text does not follow the documented grammar.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// A required column or field is missing.
    #[error("schema error: {0}")]
    Schema(String),

    /// Timestamps or event indices out of order.
    #[error("sequencing error at line {line}: {msg}")]
    Sequencing { line: usize, msg: String },

    /// File written by an unsupported schema version.
    #[error("incompatible schema_version {found} (supported: {supported})")]
    Incompatible { found: u32, supported: u32 },

    /// File ended early or its declared counts disagree with its body.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Value outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Non-finite or otherwise unusable numeric input.
    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("filter design error: {0}")]
    Design(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Wraps an error raised inside a named pipeline stage.
    #[error("stage `{stage}` failed for {context}: {source}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str, context: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            context: context.into(),
            source: Box::new(self),
        }
    }
}
