use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band {low_hz}-{high_hz} Hz for Nyquist {nyquist_hz} Hz")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        nyquist_hz: f64,
    },

    #[error("invalid filter order {0}")]
    InvalidOrder(usize),

    #[error("{what}: need at least {needed} samples, got {actual}")]
    Length {
        what: &'static str,
        needed: usize,
        actual: usize,
    },

    #[error("channel {channel} is constant, cannot min-max normalise")]
    DegenerateChannel { channel: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank {rank} outside 1..={max}")]
    Rank { rank: usize, max: usize },

    #[error("matrix is near-singular: eigenvalue {eigenvalue:e} below {threshold:e}")]
    NearSingular { eigenvalue: f64, threshold: f64 },

    #[error("{0} requires at least one input")]
    Empty(&'static str),

    #[error("class {0} has no training samples")]
    EmptyClass(usize),

    #[error("invalid dropout/parameter value: {0}")]
    InvalidParameter(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
