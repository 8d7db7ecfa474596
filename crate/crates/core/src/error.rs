use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    #[error("antiderivative G does not grow past {target} within |x| <= {limit}")]
    NotNormalizable { target: f64, limit: f64 },

    #[error("tail majorant unusable: g({x}) = {value} is not positive")]
    TailBound { x: f64, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("law is not of any type k <= {k_max}: {reason}")]
    NoType { k_max: usize, reason: String },

    #[error("limit density not normalizable: c2 = {c2} <= 0")]
    NonPositiveC2 { c2: f64 },

    #[error("rate fit needs at least 3 usable points, got {usable}")]
    TooFewPoints { usable: usize },

    #[error("inner Monte Carlo failure rate {rate} exceeds {limit}")]
    InnerFailures { rate: f64, limit: f64 },

    #[error("batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
