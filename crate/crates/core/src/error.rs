use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("graph is frozen")]
    Frozen,

    #[error("density undefined for a graph with {0} node(s)")]
    UndefinedDensity(usize),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("user {0} has interacted with every item")]
    Saturated(usize),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("value {0} outside [0, 1]")]
    Range(f64),

    #[error("input error: {0}")]
    Input(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("checksum mismatch at byte {offset}: stored {stored:#010x}, computed {computed:#010x}")]
    Integrity {
        offset: usize,
        stored: u32,
        computed: u32,
    },

    #[error("checkpoint version {found} is not supported (expected {expected}); re-save with this build")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input data or files rather than usage.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
