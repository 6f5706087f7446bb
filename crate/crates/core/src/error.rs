use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("graph is not connected (lambda_2 = {lambda2:e})")]
    NotConnected { lambda2: f64 },
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("degenerate model: {0}")]
    ModelDegenerate(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("numerical divergence at t = {t}")]
    Divergence { t: usize },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable upper-case identifier for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidTopology(_) => "INVALID_TOPOLOGY",
            Error::InvalidParameter(_) => "INVALID_PARAMETER",
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::NotConnected { .. } => "NOT_CONNECTED",
            Error::Resource(_) => "RESOURCE",
            Error::ModelDegenerate(_) => "MODEL_DEGENERATE",
            Error::AssumptionViolated(_) => "ASSUMPTION_VIOLATED",
            Error::Divergence { .. } => "DIVERGENCE",
            Error::ContractViolation(_) => "CONTRACT_VIOLATION",
            Error::Infeasible(_) => "INFEASIBLE",
            Error::InsufficientData(_) => "INSUFFICIENT_DATA",
            Error::Io(_) => "IO",
            Error::Json(_) => "JSON",
        }
    }

    /// Process exit status: 2 for divergence, 3 for infeasibility, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 2,
            Error::Infeasible(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
