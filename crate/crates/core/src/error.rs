use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RolemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// `U1^T Gamma` is too ill-conditioned to extract the envelope coordinates;
    /// the caller should pick another reference frame.
    #[error("reference frame failure: condition number {condition:.3e} of U1^T Gamma")]
    FrameFailure { condition: f64 },

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("non-finite value in {block}: {detail}")]
    NonFinite { block: &'static str, detail: String },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

impl RolemError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RolemError::InvalidParameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        RolemError::Dimension(msg.into())
    }

    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            RolemError::NotPositiveDefinite(_)
                | RolemError::FrameFailure { .. }
                | RolemError::RankDeficient(_)
                | RolemError::NonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, RolemError>;
