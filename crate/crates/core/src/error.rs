use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A right-hand side produced a non-finite value, or the state norm
    /// exceeded the divergence threshold.
    #[error("integration diverged at tau = {tau}")]
    Diverged { tau: f64 },

    #[error("convergence order is indeterminate: successive errors {error:e} are below the roundoff floor")]
    OrderIndeterminate { error: f64 },

    #[error("factor is singular at tau = {tau} (condition number {condition:e})")]
    SingularFactor { tau: f64, condition: f64 },

    #[error("metric is singular at the requested point (condition number {condition:e})")]
    SingularMetric { condition: f64 },

    #[error("analytic metric disagrees with the differentiated potential by {deviation:e}")]
    AnalyticMismatch { deviation: f64 },

    #[error("finite-difference step {h:e} is below the roundoff floor {min:e}")]
    StepTooSmall { h: f64, min: f64 },

    /// The finite-difference metric failed the Hermitian check, which points
    /// to a non-real potential or a badly chosen step.
    #[error("differentiated metric is not Hermitian (violation {violation:e}); check the potential and the step")]
    NonHermitian { violation: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
