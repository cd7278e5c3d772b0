use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation hit a pole or an otherwise undefined point.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An internal consistency check failed (e.g. a gradient that should be real is not).
    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("{what} did not converge within {iterations} iterations")]
    IterationLimit { what: &'static str, iterations: usize },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad configuration rather than a numerical failure.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Invalid { .. } | Error::Parse(_) => true,
            Error::Context { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
