//! Error type shared across the crate.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A dimension is zero or otherwise unusable (n = 0, m = 0, k > n, ...).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// Two arguments that must agree in length/shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Per-entry probability d/(s·n) of the sparse binary ensemble exceeds 1.
    #[error("sparse matrix density d/(s*n) = {0:.6} exceeds 1; lower d or raise s*n")]
    DensityTooHigh(f64),

    /// Rejection sampling of a nonzero signal kept drawing the all-zero vector.
    #[error("signal resampling exhausted after {0} redraws of an all-zero vector")]
    ResampleExhausted(usize),

    /// A noise vector with zero norm makes the requested SNR undefined.
    #[error("noise vector has zero norm; SNR is undefined")]
    ZeroNormNoise,

    /// An iterative solver produced non-finite state.
    #[error("solver diverged (non-finite state) at iteration {0}")]
    Diverged(usize),

    /// The least-squares system for the runtime model is degenerate.
    #[error("runtime model fit is degenerate: {0}")]
    DegenerateFit(String),

    /// A denoiser was asked to run from a table that was never built.
    #[error("true-prior denoiser requires a tabulated prior; none was attached")]
    MissingPriorTable,

    /// Malformed experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed on-disk matrix container.
    #[error("matrix container: {0}")]
    MatrixFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
