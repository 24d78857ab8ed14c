use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index maps do not partition the token range: {0}")]
    Partition(String),
    #[error("foreground mask is empty")]
    EmptyForeground,
    #[error("token {index} has zero norm")]
    DegenerateToken { index: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("timestep out of range: {0}")]
    Schedule(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
}
