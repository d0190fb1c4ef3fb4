use thiserror::Error;

/// Errors raised by the flow, density and diagnostic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoughFlowError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mollification level must be at least 1")]
    ZeroMollificationLevel,

    #[error("kernel support radius {0} exceeds the unit-ball contract")]
    KernelSupportTooWide(f64),

    #[error("drift divergence has no global bound")]
    UnboundedDivergence,

    #[error("final time {t} is not an integer multiple of step {h}")]
    NonIntegralSteps { t: f64, h: f64 },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("singular jacobian (|det| = {det:e}) at step {step}; reduce the step size")]
    SingularJacobian { step: usize, det: f64 },

    #[error("newton inversion did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },

    #[error("point lies outside the stored chart")]
    OutOfChart,

    #[error("trajectory left the chart region at step {step}; enlarge the chart radius")]
    ChartExhausted { step: usize },

    #[error("field `{0}` provides no second derivatives")]
    MissingHessian(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("grid does not cover the requested domain: {0}")]
    Coverage(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RoughFlowError {
    fn from(err: std::io::Error) -> Self {
        RoughFlowError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RoughFlowError>;
