use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("feature {0} has no observations")]
    Availability(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("value {value} is outside Z_2^{d}")]
    OutOfRange { value: u64, d: u32 },

    #[error("{msg} (residual {residual:e})")]
    Numeric { msg: String, residual: f64 },

    #[error("plaintext {0} outside the signed plaintext range")]
    PlaintextRange(i128),

    #[error("ciphertexts under different keys")]
    KeyMismatch,

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("session error: {0}")]
    Session(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("wire error: {0}")]
    Wire(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
