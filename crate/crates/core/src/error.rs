use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("invalid parameters for {scenario}: {reason}")]
    InvalidParameters { scenario: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite coefficient {what} at t={t}, x={x:?}")]
    NonFiniteCoefficient { what: &'static str, t: f64, x: Vec<f64> },

    #[error("particle {particle} became non-finite at step {step} (t={t})")]
    BlowUp { particle: usize, step: u64, t: f64 },

    #[error("{limit} exceeds the exact-assignment cap of {cap} samples")]
    TooManySamples { limit: usize, cap: usize },

    #[error("sample sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
