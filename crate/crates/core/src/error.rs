use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("kernel evaluation failed: {0}")]
    Evaluation(String),

    #[error("quadrature did not reach tolerance in cell {cell} (error estimate {estimate:.3e})")]
    Accuracy { cell: usize, estimate: f64 },

    #[error("implicit step {step} is singular (|1 + gamma w| = {modulus:.3e}); refine the grid")]
    Stability { step: usize, modulus: f64 },

    #[error("consistency failure: {0}")]
    Consistency(String),

    #[error("contour overflow at t = {t}; rescale the Talbot contour")]
    ContourScaling { t: f64 },

    #[error("out of range: {0}")]
    Range(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by invalid input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Parameter { .. } | Error::Unsupported(_))
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter { .. } => "parameter",
            Error::Evaluation(_) => "evaluation",
            Error::Accuracy { .. } => "accuracy",
            Error::Stability { .. } => "stability",
            Error::Consistency(_) => "consistency",
            Error::ContourScaling { .. } => "contour_scaling",
            Error::Range(_) => "range",
            Error::Unsupported(_) => "unsupported",
            Error::Fit(_) => "fit",
            Error::NonFinite(_) => "non_finite",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
