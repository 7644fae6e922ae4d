use thiserror::Error;

/// Errors raised anywhere in the model pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EconError {
    /// A parameter, strategy, or input violated its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A closed-form optimum has a non-positive denominator, so no interior
    /// optimum exists for the given parameters.
    #[error("no interior optimum: {0}")]
    NoInteriorOptimum(String),

    /// The coupled fixed-point iteration did not settle.
    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    Diverged { iterations: usize, last_step: f64 },

    /// The grid incumbent sits on a boundary where cost keeps decreasing.
    #[error("unbounded: {0}")]
    Unbounded(String),

    /// No integer point in the searched neighbourhood reaches the gain target.
    #[error("no feasible integer strategy within radius {radius} of the continuous optimum")]
    Infeasible { radius: u32 },

    /// Not enough distinct design points to identify the coefficients.
    #[error("insufficient design: {distinct} distinct design points, {required} coefficients")]
    InsufficientDesign { distinct: usize, required: usize },
}

impl EconError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        EconError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, EconError>;
