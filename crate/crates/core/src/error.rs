use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("grid steps {steps} not divisible by {required} ({context})")]
    Divisibility {
        steps: usize,
        required: usize,
        context: String,
    },

    #[error("state norm exceeded blow-up threshold at t = {t_blow}")]
    BlowUp { t_blow: f64 },

    #[error("smoothed reference crosses zero in component {component}")]
    OrthantViolation { component: usize },

    #[error("oscillation budget exhausted: best achieved error {best_error}")]
    BudgetExhausted { best_error: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
