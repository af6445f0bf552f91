//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by matrix construction, model assembly, simulation, and
/// spectral estimation.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A rational transfer function was evaluated at (or numerically at) a
    /// non-removable pole on the unit circle.
    #[error("transfer function pole at Omega = {omega:.6e} rad/sample (harmonic {harmonic} of {dim})")]
    SingularEvaluation {
        omega: f64,
        harmonic: usize,
        dim: usize,
    },

    /// `I - L` is singular or nearly so at the evaluation frequency.
    #[error("(I - L) ill-conditioned: condition estimate {cond:.3e} exceeds threshold {threshold:.3e}")]
    IllConditioned { cond: f64, threshold: f64 },

    /// Two conversion matrices of different dimensions were combined.
    #[error("conversion matrix dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A periodic window cannot be extended to the requested problem dimension.
    #[error("window period {period} does not divide problem dimension {dim}")]
    IncompatibleWindow { period: usize, dim: usize },

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Invalid frequency grid.
    #[error("frequency grid: {0}")]
    Grid(String),

    /// A jitter integration band is not covered by the stored grid.
    #[error(
        "integration band [{lo:.3e}, {hi:.3e}] Hz not covered by grid [{grid_lo:.3e}, {grid_hi:.3e}] Hz"
    )]
    BandCoverage {
        lo: f64,
        hi: f64,
        grid_lo: f64,
        grid_hi: f64,
    },

    /// An error annotated with the analysis frequency it occurred at.
    #[error("at {freq_hz:.6e} Hz: {source}")]
    AtFrequency {
        freq_hz: f64,
        #[source]
        source: Box<Error>,
    },

    /// The time-domain simulation produced a non-finite state.
    #[error("simulation diverged: non-finite state at sample {sample}")]
    Unstable { sample: usize },

    /// A time series is too short for the requested spectral estimate.
    #[error("time series too short: {len} samples, estimator needs at least {required}")]
    TooShort { len: usize, required: usize },

    /// No frequency points survived band selection and notch exclusion.
    #[error("empty comparison band after exclusions")]
    EmptyBand,

    /// Backend linear-algebra failure.
    #[error("linear algebra backend: {0}")]
    Backend(String),
}

impl Error {
    /// Wrap an error with the frequency (Hz) it occurred at.
    pub fn at_frequency(self, freq_hz: f64) -> Self {
        Error::AtFrequency {
            freq_hz,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
