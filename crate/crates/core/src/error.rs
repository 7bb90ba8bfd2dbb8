use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expert index {index} out of range for K = {k}")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// An operation that needs a completed exploration phase was invoked early.
    #[error("phase order: {0}")]
    PhaseOrder(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    /// An error raised inside one episode of a batch.
    #[error("{algorithm}, seed {seed}: {source}")]
    InRun {
        algorithm: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input (configuration, files), as
    /// opposed to failures while a run is in progress.
    pub fn is_config(&self) -> bool {
        if let Error::InRun { source, .. } = self {
            return source.is_config();
        }
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::IndexOutOfRange { .. }
                | Error::UnsupportedSize(_)
                | Error::Parse { .. }
                | Error::Ingest(_)
        )
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
