use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The variants are grouped by [`ErrorCategory`] so that front ends can map
/// them onto stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error(
        "inverse-gap weights do not form a distribution (sum of non-minimal probabilities {excess:.6} > 1); \
         use mu >= {min_mu:.6} (mu >= B - 1 = {fallback} always suffices)"
    )]
    Parameterization {
        excess: f64,
        min_mu: f64,
        fallback: usize,
    },

    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    Conditioning { jitter: f64 },

    #[error("input row {row} is not unit-norm (norm = {norm})")]
    NotNormalized { row: usize, norm: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("seed {seed}: {source}")]
    Seeded {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Divergence,
    Numerical,
    Data,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 2,
            ErrorCategory::Divergence => 3,
            ErrorCategory::Numerical => 4,
            ErrorCategory::Data => 5,
            ErrorCategory::Io => 6,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidConfig(_) | Error::Shape { .. } => ErrorCategory::Validation,
            Error::Divergence { .. } => ErrorCategory::Divergence,
            Error::Parameterization { .. } | Error::Conditioning { .. } => ErrorCategory::Numerical,
            Error::NotNormalized { .. } | Error::Data(_) | Error::Csv(_) => ErrorCategory::Data,
            Error::Io(_) | Error::Json(_) => ErrorCategory::Io,
            Error::Seeded { source, .. } => source.category(),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
