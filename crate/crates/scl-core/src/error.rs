use thiserror::Error;

#[derive(Debug, Error)]
pub enum SclError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dense simulation over cap: {qubits} qubits > cap {cap}")]
    DenseCap { qubits: usize, cap: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("learning failed: {0}")]
    Learning(String),
    #[error("unsatisfiable constraint chain at position {position}: {reason}")]
    Unsatisfiable { position: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl SclError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SclError::Invalid(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        SclError::Numerical(msg.into())
    }
    pub fn learning(msg: impl Into<String>) -> Self {
        SclError::Learning(msg.into())
    }
}
