//! Phase noise analysis for discrete-time LPTV digital PLLs.
//!
//! The library computes the output phase noise of an integer-N digital PLL
//! with a time-varying proportional gain (fast phase-error correction) by
//! representing every block of the loop as a conversion matrix: LTI blocks
//! become diagonal matrices over frequency-shifted harmonics, periodic
//! multiplications become Toeplitz matrices, and the feedback loop is closed
//! with a linear solve. Noise sources running below the DCO rate (reference/
//! TDC noise at `f_DCO/N`, delta-sigma quantization noise at `f_DCO/M`) are
//! zero-insertion upsampled; a decorrelation window compensates for the
//! cross-correlated spectral shifts of the resulting cyclostationary
//! sequences so the usual stationary output-PSD formula applies without
//! enlarging the problem dimension to the beat period.
//!
//! Every frequency-domain prediction can be cross-checked against the
//! built-in time-domain simulator ([`oracle`]), which runs the same block
//! diagram sample by sample and estimates the output spectrum with Welch
//! averaging.

pub mod cm;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod pll;
pub mod spectra;
pub mod transfer;

pub use cm::{
    closed_loop_solve, fractional_resample_matrix, lti_conversion_matrix, mul_conversion_matrix,
    ClosedLoopSolver, ConversionMatrix, PeriodicWindow,
};
pub use error::{Error, Result};
pub use grid::{frequency_grid, GridSpacing};
pub use oracle::{compare, simulate, welch_psd, CompareReport, CompareSpec, PsdEstimate, SimRun, WelchConfig};
pub use pll::{
    analyze, analyze_fractional, divider_window, fpec_window, loop_gain, path_gains, sweep,
    AnalysisResult, Parallelism, PllConfig, SourceSet, SweepParam, SweepTable,
};
pub use spectra::{
    correlated_shift_sequence, decorrelation_window, output_psd, rms_jitter, ssb_phase_noise,
    NoiseKind, NoiseSource, PnColumn, PnCurve,
};
pub use transfer::RationalTransfer;
