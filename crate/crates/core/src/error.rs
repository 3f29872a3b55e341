use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// All noise intensities vanish; the model is a deterministic NSE.
    #[error("degenerate noise: all noise intensities are zero (use sigma = 0 explicitly)")]
    DegenerateNoise,

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {time} is outside [0, {horizon}]")]
    OutOfRange { time: f64, horizon: f64 },

    #[error("time {0} is not a grid node")]
    OffGrid(f64),

    #[error("scheme instability at step {step}: |state|_H = {norm:.6e} exceeds {threshold:.6e}; reduce dt")]
    Instability {
        step: usize,
        norm: f64,
        threshold: f64,
    },

    #[error("basis with max wavenumber {max_wavenumber} needs {modes} modes, above the budget of {budget}")]
    BasisTooLarge {
        max_wavenumber: u32,
        modes: usize,
        budget: usize,
    },

    #[error("invalid basis file: {0}")]
    InvalidBasis(String),

    #[error("invalid random initial field: {0}")]
    InvalidField(String),

    #[error("malformed partition: {0}")]
    Partition(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
