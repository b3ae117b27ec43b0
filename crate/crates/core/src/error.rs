use thiserror::Error;

/// Errors produced by the simulator, trainer and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("a channel needs at least one path")]
    EmptyPaths,

    #[error("achievable rate is undefined for zero noise variance")]
    ZeroNoise,

    #[error("degenerate channel: the reference codeword collects no energy")]
    DegenerateChannel,

    #[error("training overhead {used} slots exceeds coherence budget {budget}")]
    BudgetExceeded { used: f64, budget: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("dataset audit failed at sample {index}: {reason}")]
    Audit { index: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
