use thiserror::Error;

/// Errors raised anywhere in the monitoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("record {record} is missing its timestamp; run preprocessing first")]
    MissingTimestamp { record: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach the 1-based batch index to an error raised while scoring a batch.
    pub fn in_batch(self, batch: usize) -> Self {
        Error::Batch {
            batch,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the input data rather than by configuration or
    /// internal failures.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Data(_)
            | Error::Schema(_)
            | Error::MissingTimestamp { .. }
            | Error::UnknownFeature(_)
            | Error::Csv(_)
            | Error::Json(_) => true,
            Error::Batch { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
