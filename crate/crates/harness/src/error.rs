use sbl_core::SblError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("matrix file {path}: {msg}")]
    Matrix { path: String, msg: String },
    #[error("metric: {0}")]
    Metric(String),
    #[error(transparent)]
    Core(#[from] SblError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
