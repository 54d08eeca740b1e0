use thiserror::Error;

/// Errors raised by the noise-model library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("probability vector is empty")]
    EmptyProbabilities,
    #[error("probability at index {index} is {value}, expected a value in [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("brute-force pmf supports at most {max} probabilities, got {got}")]
    TooManyProbabilities { got: usize, max: usize },
    #[error("index {k} outside the support 0..={n}")]
    SupportIndex { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("optimizer did not converge after {evaluations} evaluations")]
    NoConvergence { evaluations: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("device {device}: {source}")]
    Device {
        device: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{layer} layer: {source}")]
    Layer {
        layer: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_device(self, device: impl Into<String>) -> Self {
        Error::Device {
            device: device.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_layer(self, layer: &'static str) -> Self {
        Error::Layer {
            layer,
            source: Box::new(self),
        }
    }

    /// True when the error (or its innermost cause) is a numerical failure
    /// rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoConvergence { .. } | Error::Numerical(_) => true,
            Error::Device { source, .. } | Error::Layer { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
