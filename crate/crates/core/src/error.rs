use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design space: {0}")]
    InvalidSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate metric `{name}`: {reason}")]
    DegenerateMetric { name: String, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("surrogate fit failed: {0}")]
    Fit(String),

    #[error("unknown testbench `{0}`")]
    UnknownTestbench(String),

    #[error("backend transport failure: {0}")]
    Transport(String),

    #[error("malformed backend frame ({reason}): {frame}")]
    MalformedFrame { reason: String, frame: String },

    #[error("backend reported error: {0}")]
    Backend(String),

    #[error("probability mass sums to {sum} (tolerance {tolerance})")]
    Normalization { sum: f64, tolerance: f64 },

    #[error("bin centers are not strictly ascending at index {index}")]
    NonAscending { index: usize },

    #[error("context of {size} points exceeds backend limit {limit}")]
    ContextTooLarge { size: usize, limit: usize },

    #[error("external evaluator failed: {0}")]
    Evaluator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
