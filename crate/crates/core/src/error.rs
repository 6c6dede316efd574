//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix/vector dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input is numerically rank-deficient and cannot be orthonormalized.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A value failed domain validation (counts, ranges, referential integrity).
    #[error("validation error: {0}")]
    Validation(String),

    /// A text file could not be parsed.
    #[error("parse error: {file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// A computation produced NaN or infinity.
    #[error("numeric divergence: {0}")]
    NumericDivergence(String),

    /// The coupled factorization mixing weight makes the problem singular.
    #[error("singular mixing weight: {0}")]
    SingularMixing(String),

    /// A convergence precondition does not hold for the given instance.
    #[error("condition ({condition}) violated: {detail}")]
    ConditionViolated { condition: char, detail: String },

    /// An id was not found in the model or dataset it was looked up in.
    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-parsable reason slug used by the command-line frontend.
    pub fn reason_slug(&self) -> String {
        match self {
            Error::Shape(_) => "shape-error".into(),
            Error::DegenerateInput(_) => "degenerate-input".into(),
            Error::Validation(_) => "validation-error".into(),
            Error::Parse { .. } => "parse-error".into(),
            Error::NumericDivergence(_) => "numeric-divergence".into(),
            Error::SingularMixing(_) => "singular-mixing".into(),
            Error::ConditionViolated { condition, .. } => {
                format!("condition-{condition}-violated")
            }
            Error::UnknownId(_) => "unknown-id".into(),
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                "input-not-found".into()
            }
            Error::Io { .. } => "io-error".into(),
        }
    }
}
