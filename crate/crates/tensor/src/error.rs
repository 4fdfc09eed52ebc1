use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed weight data: {0}")]
    Format(String),
}
