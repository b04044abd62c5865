use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mask has no foreground pixel")]
    EmptyMask,

    #[error("{what} out of bounds for a {height}x{width} grid")]
    OutOfBounds { what: String, height: usize, width: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{what}: value {value} outside the allowed range")]
    ValueRange { what: &'static str, value: f64 },

    #[error("uncertainty must be non-negative, found {0}")]
    NegativeUncertainty(f64),

    #[error("grid is {height}x{width}, operation needs at least {min}x{min}")]
    TooSmall { height: usize, width: usize, min: usize },

    #[error("no path between {0:?} and {1:?} inside the search box")]
    Unreachable((usize, usize), (usize, usize)),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("predictor returned {found:?} for a {expected:?} input")]
    PredictorShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by unreadable or malformed input files, as
    /// opposed to contract violations on well-formed data.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Format(_) | Error::Io(_) | Error::Json(_))
    }

    pub(crate) fn out_of_bounds(what: impl Into<String>, height: usize, width: usize) -> Self {
        Error::OutOfBounds {
            what: what.into(),
            height,
            width,
        }
    }
}
