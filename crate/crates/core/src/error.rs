use thiserror::Error;

/// Errors raised by the simulator and its monitors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("negative density {value:e} at cell {cell}")]
    NegativeDensity { cell: usize, value: f64 },

    #[error("positivity lost in {field} at cell {cell} (value {value:e}); dt={dt:e} likely exceeds the stable step")]
    Positivity {
        field: &'static str,
        cell: usize,
        value: f64,
        dt: f64,
    },

    #[error("non-finite value in {field} at cell {cell}")]
    NonFinite { field: &'static str, cell: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
