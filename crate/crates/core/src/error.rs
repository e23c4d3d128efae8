use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at {layer}: expected {expected}, got {actual}")]
    Shape {
        layer: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("unknown layer id `{0}`")]
    UnknownLayer(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("covariance is singular (condition estimate {condition:e}); increase the ridge")]
    Singular { condition: f64 },

    #[error("interrogation failed at step {step}: {source}")]
    Interrogation {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub(crate) fn shape(
        layer: impl Into<String>,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            layer: layer.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::UnknownLayer(_) => "unknown_layer",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Diverged { .. } => "diverged",
            Error::Singular { .. } => "singular",
            Error::Interrogation { .. } => "interrogation",
            Error::Format { .. } => "format",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
        }
    }
}
