use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("corpus contains no dialogues")]
    EmptyCorpus,

    #[error("need at least {needed} dialogues to split, found {found}")]
    TooFewDialogues { needed: usize, found: usize },

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),

    #[error("history of {got} turns is shorter than the required {needed}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training data contains a single label")]
    SingleLabel,

    #[error("no training data")]
    EmptyData,

    #[error("no tokens in corpus text")]
    EmptyVocabulary,

    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),

    #[error("k-means needs k in 1..={distinct} distinct points, got k={k}")]
    InvalidClusterCount { k: usize, distinct: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("encoding mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input (files, configs) rather than
    /// failures while training or evaluating.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Malformed { .. }
            | Error::EmptyCorpus
            | Error::InvalidSpec(_)
            | Error::InvalidConfig(_)
            | Error::UnknownModel(_)
            | Error::Json(_) => true,
            Error::Context { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}
