use std::fmt;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value {value} at pixel ({row}, {col})")]
    NonFinitePixel { row: usize, col: usize, value: f64 },

    #[error("noise level {0} outside the blind range [0, 55]")]
    NoiseLevel(f64),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: Dims, right: Dims },

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("mode {0} is not a valid manipulation mode (0..=12)")]
    UnknownMode(u8),

    #[error("mode {mode} is not a {expected} mode")]
    WrongModeKind { mode: u8, expected: &'static str },

    #[error("denoiser failed on branch {mode}: {source}")]
    Branch {
        mode: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Height × width pair used in diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims(pub usize, pub usize);

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.0, self.1)
    }
}
