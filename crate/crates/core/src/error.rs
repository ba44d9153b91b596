use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("tidal loss requires both morning and evening components (morning={morning}, evening={evening})")]
    MissingTidalGroups { morning: usize, evening: usize },

    #[error("non-finite loss at iteration {iteration} ({phase})")]
    NonFiniteLoss { iteration: usize, phase: &'static str },

    #[error("non-finite projection weight for user row {row}")]
    NonFiniteProjection { row: usize },

    #[error("requested {clusters} clusters for {points} points")]
    TooManyClusters { clusters: usize, points: usize },

    #[error("label sets cover different items: {0}")]
    ItemMismatch(String),

    #[error("need {needed} users for the stability partition, have {available}")]
    InsufficientUsers { needed: usize, available: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
