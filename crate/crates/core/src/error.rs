use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model assumption violated: sigma below floor {floor} at {} grid point(s): {points:?}", points.len())]
    Assumption { floor: f64, points: Vec<f64> },

    #[error("threshold solver failed: {0}")]
    Threshold(String),

    #[error("non-finite state at step {step} (particle {particle})")]
    NonFiniteState { step: usize, particle: usize },

    #[error("singular coefficient system: {0}")]
    Singular(String),

    #[error("closed-form coefficients disagree with the defining equations (residual {residual:e})")]
    CoefficientMismatch { residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Threshold(_)
                | Error::NonFiniteState { .. }
                | Error::Singular(_)
                | Error::CoefficientMismatch { .. }
        )
    }
}
