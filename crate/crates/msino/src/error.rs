use thiserror::Error;

/// Errors raised across the library. Variant names follow the per-operation
/// contracts (domain violations, parse/validation failures, solver failures).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("degenerate operator: {0}")]
    Degenerate(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("missing label: {0}")]
    MissingLabel(String),
    #[error("divergence: loss = {loss}")]
    Divergence { loss: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("indefinite Hessian: lambda_min = {lambda_min}")]
    IndefiniteHessian { lambda_min: f64 },
    #[error("backtracking exhausted after {tries} tries")]
    BacktrackExhausted { tries: usize },
    #[error("insufficient history: need {need}, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
