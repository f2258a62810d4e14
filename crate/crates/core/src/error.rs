use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("empty trace")]
    EmptyTrace,

    #[error("unknown label {0}")]
    UnknownLabel(char),

    #[error("duplicate annotation at sample {0}")]
    DuplicateAnnotation(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample rate mismatch: detector designed for {expected} Hz, trace is {actual} Hz")]
    SampleRateMismatch { expected: f64, actual: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("unknown frequency {0} Hz")]
    UnknownFrequency(f64),

    #[error("unknown cnn model {0:?}")]
    UnknownCnnModel(String),

    #[error("deadlock at t={t}s: {snapshot}")]
    Deadlock { t: f64, snapshot: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
