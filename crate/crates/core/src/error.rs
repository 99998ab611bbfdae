use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// A quadrature or iterative routine failed to reach its tolerance.
    #[error("numeric failure in {routine}: {diagnostics}")]
    Numeric {
        routine: &'static str,
        diagnostics: String,
    },

    #[error("step size {dt:e} s is unstable for rates up to {rate:e} rad/s")]
    StepSize { dt: f64, rate: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no dip detected: fitted depth {depth:.3e} within {sigma:.3e} of zero")]
    FlatSignal { depth: f64, sigma: f64 },

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("empty trace: {0}")]
    EmptyTrace(String),

    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),

    /// Malformed configuration or CSV input, with the offending position.
    #[error("{source_name}:{line}:{column}: {message}")]
    Data {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(source_name: &str, line: usize, column: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            source_name: source_name.to_string(),
            line,
            column,
            message: msg.into(),
        }
    }

    /// Process exit code category: 3 for bad data or inputs, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Unsupported(_)
            | Error::Data { .. }
            | Error::Io(_)
            | Error::EmptyTrace(_)
            | Error::DegenerateTrace(_)
            | Error::FlatSignal { .. } => 3,
            Error::Numeric { .. }
            | Error::StepSize { .. }
            | Error::DegenerateFit(_)
            | Error::ModelViolation(_) => 4,
        }
    }
}

/// Checks that `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

pub(crate) fn require_nonnegative(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be non-negative and finite, got {value}")))
    }
}
