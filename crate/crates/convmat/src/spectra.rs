//! Noise-source spectra, uncorrelated upsampling, and phase-noise bookkeeping.
//!
//! PSD convention: a discrete-time source is described by its two-sided PSD
//! per normalized frequency, `S(Ω)` with `Ω ∈ [0, 2π)` at the source's own
//! sampling rate, normalized so that white noise of variance `v` has
//! `S(Ω) = v`. Converting to a single-sideband phase noise density in dBc/Hz
//! divides by the DCO sampling rate: a white phase variance `v` rad² at rate
//! `f` yields `ℒ = 10·log10(v/f)`.
//!
//! Sources below the DCO rate are brought up by zero-insertion upsampling,
//! whose time-averaged PSD is `S(mod(L·Ω, 2π))/L`. The upsampled sequence is
//! cyclostationary: its spectrum is correlated with some of its own
//! `2πk/N`-shifted copies, which the stationary output-PSD sum would ignore.
//! Multiplying the system matrix by the conversion matrix of the
//! decorrelation window restores the missing power; the window has support on
//! multiples of `gcd(L, N)` and magnitude `sqrt(gcd(L, N))`, which preserves
//! total power. The shifts that *are* correlated form the complementary comb
//! with period `N/gcd(L, N)`.

use num_complex::Complex64;
use num_integer::Integer;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use crate::cm::{ConversionMatrix, PeriodicWindow};
use crate::error::{Error, Result};

/// Output clamp used when writing dB values to files: `-inf` markers become
/// this floor so artifacts stay finite.
pub const PN_FLOOR_DBCHZ: f64 = -400.0;

/// Variance of a uniform quantization error over one LSB.
pub const QUANTIZATION_NOISE_VARIANCE: f64 = 1.0 / 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Reference/TDC noise entering at the phase detector, rate `f_REF`.
    Reference,
    /// Delta-sigma quantization noise, rate `f_DSM`.
    Dsm,
    /// Oscillator phase noise, already at the DCO rate.
    Dco,
    Custom,
}

impl NoiseKind {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::Reference => "ref",
            NoiseKind::Dsm => "dsm",
            NoiseKind::Dco => "dco",
            NoiseKind::Custom => "custom",
        }
    }
}

/// A noise source described by its native-rate PSD and the integer factor `L`
/// relating its rate to the DCO rate.
#[derive(Clone)]
pub struct NoiseSource {
    kind: NoiseKind,
    upsample: usize,
    psd: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for NoiseSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseSource")
            .field("kind", &self.kind)
            .field("upsample", &self.upsample)
            .finish()
    }
}

impl NoiseSource {
    /// Arbitrary source from a PSD closure over `Ω ∈ [0, 2π)`.
    pub fn custom(upsample: usize, psd: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        assert!(upsample >= 1);
        Self {
            kind: NoiseKind::Custom,
            upsample,
            psd: Arc::new(psd),
        }
    }

    /// Oscillator phase noise: white frequency perturbations of the given
    /// variance (rad² per sample) accumulated by the phase integrator,
    /// `S(Ω) = v/|1 - e^{-jΩ}|²` at the DCO rate. Unbounded at `Ω = 0`;
    /// analysis grids exclude DC.
    pub fn dco_phase(variance: f64) -> Self {
        assert!(variance >= 0.0);
        Self {
            kind: NoiseKind::Dco,
            upsample: 1,
            psd: Arc::new(move |omega: f64| {
                let d = (1.0 - Complex64::from_polar(1.0, -omega)).norm_sqr();
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    variance / d
                }
            }),
        }
    }

    /// Second-order delta-sigma quantization noise: white 1/12 LSB² shaped by
    /// `(1 - z^-1)²`, so `S(Ω) = |1 - e^{-jΩ}|⁴/12` at `f_DSM = f_DCO/m`.
    pub fn dsm_quantization(m: usize) -> Self {
        assert!(m >= 1);
        Self {
            kind: NoiseKind::Dsm,
            upsample: m,
            psd: Arc::new(|omega: f64| {
                let d = (1.0 - Complex64::from_polar(1.0, -omega)).norm_sqr();
                QUANTIZATION_NOISE_VARIANCE * d * d
            }),
        }
    }

    /// TDC quantization noise lumped into the reference: white
    /// `(1/12)/K_PD²` rad² at `f_REF = f_DCO/n`.
    pub fn tdc_reference(k_pd: f64, n: usize) -> Self {
        assert!(k_pd > 0.0 && n >= 1);
        let level = QUANTIZATION_NOISE_VARIANCE / (k_pd * k_pd);
        Self {
            kind: NoiseKind::Reference,
            upsample: n,
            psd: Arc::new(move |_| level),
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// Upsampling factor `L = f_DCO / f_native`.
    pub fn upsample(&self) -> usize {
        self.upsample
    }

    /// Native-rate PSD at `Ω ∈ [0, 2π)`.
    pub fn native_psd(&self, omega: f64) -> f64 {
        (self.psd)(omega.rem_euclid(TAU))
    }

    /// Time-averaged PSD of the zero-insertion upsampled sequence at the DCO
    /// rate: `S(mod(L·Ω, 2π))/L`.
    pub fn upsampled_psd(&self, omega: f64) -> f64 {
        let l = self.upsample as f64;
        self.native_psd((l * omega).rem_euclid(TAU)) / l
    }
}

/// Decorrelation window for an `L`-times upsampled source inside an
/// `N`-periodic system: `sqrt(gcd(L,N))` wherever `n ≡ 0 (mod gcd(L,N))`,
/// zero elsewhere. Coprime rates need no correction (the window is all ones
/// and its conversion matrix is the identity).
pub fn decorrelation_window(l: usize, n: usize) -> PeriodicWindow {
    assert!(l >= 1 && n >= 1);
    let g = l.gcd(&n);
    let amp = (g as f64).sqrt();
    let samples = (0..n)
        .map(|i| if i % g == 0 { amp } else { 0.0 })
        .collect();
    PeriodicWindow::new(samples).expect("window samples are finite")
}

/// Binary comb marking the frequency shifts whose spectra remain correlated
/// with the unshifted spectrum after upsampling by `L`: ones wherever
/// `n ≡ 0 (mod N/gcd(L,N))`.
pub fn correlated_shift_sequence(l: usize, n: usize) -> PeriodicWindow {
    assert!(l >= 1 && n >= 1);
    let period = n / l.gcd(&n);
    let samples = (0..n)
        .map(|i| if i % period == 0 { 1.0 } else { 0.0 })
        .collect();
    PeriodicWindow::new(samples).expect("window samples are finite")
}

/// Output PSD of an LPTV system with stationary input: the baseband row of
/// the conversion matrix weights the input PSD at each shifted frequency,
/// `S_yy(Ω) = Σ_k |H_{0,k}|²·S_in(Ω - 2πk/K)`.
pub fn output_psd(h: &ConversionMatrix, s_in: impl Fn(f64) -> f64, omega: f64) -> f64 {
    let dim = h.dim();
    let row = h.baseband_row();
    output_psd_from_row(row.as_slice().expect("contiguous row"), &s_in, omega, dim)
}

/// Same as [`output_psd`] for a baseband row given in storage order (column
/// `c` holds input harmonic `K-1-c`).
pub fn output_psd_from_row(
    row: &[Complex64],
    s_in: &impl Fn(f64) -> f64,
    omega: f64,
    dim: usize,
) -> f64 {
    debug_assert_eq!(row.len(), dim);
    let mut acc = 0.0;
    for (c, h) in row.iter().enumerate() {
        let k = dim - 1 - c;
        let shifted = (omega - TAU * k as f64 / dim as f64).rem_euclid(TAU);
        acc += h.norm_sqr() * s_in(shifted);
    }
    acc
}

/// Single-sideband phase noise in dBc/Hz from a two-sided per-normalized-
/// frequency PSD at the DCO rate. Zero input maps to `-inf` (clamped to
/// [`PN_FLOOR_DBCHZ`] only when written to artifacts).
pub fn ssb_phase_noise(s_dsb: f64, f_dco_hz: f64) -> f64 {
    debug_assert!(s_dsb >= 0.0, "PSD must be nonnegative, got {s_dsb}");
    debug_assert!(f_dco_hz > 0.0);
    if s_dsb == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (s_dsb / f_dco_hz).log10()
    }
}

/// Clamp a dB value to the artifact floor.
pub fn clamp_pn(db: f64) -> f64 {
    db.max(PN_FLOOR_DBCHZ)
}

/// RMS jitter in seconds from a single-sideband PN column:
/// `σ_t = sqrt(2·∫ 10^{ℒ(f)/10} df) / (2π·f_out)`, trapezoidal on the stored
/// grid with interpolated band edges.
pub fn rms_jitter(
    freq_hz: &[f64],
    pn_dbchz: &[f64],
    f_lo: f64,
    f_hi: f64,
    f_out: f64,
) -> Result<f64> {
    assert_eq!(freq_hz.len(), pn_dbchz.len());
    if !(f_lo > 0.0) || f_hi <= f_lo {
        return Err(Error::Grid(format!(
            "jitter band must satisfy 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]"
        )));
    }
    let (grid_lo, grid_hi) = (freq_hz[0], freq_hz[freq_hz.len() - 1]);
    // Tiny relative slack so a band equal to the grid extent passes.
    let slack = 1e-9;
    if f_lo < grid_lo * (1.0 - slack) || f_hi > grid_hi * (1.0 + slack) {
        return Err(Error::BandCoverage {
            lo: f_lo,
            hi: f_hi,
            grid_lo,
            grid_hi,
        });
    }

    // Values at or below the artifact floor count as silence.
    let lin = |db: f64| {
        if db <= PN_FLOOR_DBCHZ {
            0.0
        } else {
            10f64.powf(db / 10.0)
        }
    };
    // Sample points: interpolated band edges plus every grid point inside.
    let mut fs: Vec<f64> = Vec::new();
    let mut ps: Vec<f64> = Vec::new();
    fs.push(f_lo.max(grid_lo));
    ps.push(lin(crate::grid::interp_log_db(freq_hz, pn_dbchz, f_lo)));
    for (&f, &db) in freq_hz.iter().zip(pn_dbchz) {
        if f > fs[0] && f < f_hi {
            fs.push(f);
            ps.push(lin(db));
        }
    }
    fs.push(f_hi.min(grid_hi));
    ps.push(lin(crate::grid::interp_log_db(freq_hz, pn_dbchz, f_hi)));

    let mut integral = 0.0;
    for i in 1..fs.len() {
        integral += 0.5 * (ps[i] + ps[i - 1]) * (fs[i] - fs[i - 1]);
    }
    Ok((2.0 * integral).sqrt() / (TAU * f_out))
}

/// One named PN column.
#[derive(Debug, Clone, PartialEq)]
pub struct PnColumn {
    pub label: String,
    pub pn_dbchz: Vec<f64>,
    /// Integrated RMS jitter over the curve's jitter band, when computed.
    pub jitter_s: Option<f64>,
}

impl PnColumn {
    pub fn new(label: impl Into<String>, pn_dbchz: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            pn_dbchz,
            jitter_s: None,
        }
    }
}

/// Frequency grid with per-source and total SSB phase noise columns.
///
/// The total is always the power sum of the per-source columns: sources are
/// modeled as independent.
#[derive(Debug, Clone, PartialEq)]
pub struct PnCurve {
    pub freq_hz: Vec<f64>,
    pub sources: Vec<PnColumn>,
    pub total: PnColumn,
    /// Band the stored jitter values were integrated over, if any.
    pub jitter_band_hz: Option<(f64, f64)>,
}

impl PnCurve {
    /// Assemble a curve from per-source columns; the total column is the
    /// per-point power sum.
    pub fn from_sources(freq_hz: Vec<f64>, sources: Vec<PnColumn>) -> Self {
        let total = power_sum(&freq_hz, &sources);
        Self {
            freq_hz,
            sources,
            total,
            jitter_band_hz: None,
        }
    }

    /// Compute and store RMS jitter for every column over `[f_lo, f_hi]`.
    pub fn compute_jitter(&mut self, f_lo: f64, f_hi: f64, f_out: f64) -> Result<()> {
        for col in self.sources.iter_mut().chain(std::iter::once(&mut self.total)) {
            col.jitter_s = Some(rms_jitter(&self.freq_hz, &col.pn_dbchz, f_lo, f_hi, f_out)?);
        }
        self.jitter_band_hz = Some((f_lo, f_hi));
        Ok(())
    }

    pub fn source(&self, label: &str) -> Option<&PnColumn> {
        self.sources.iter().find(|c| c.label == label)
    }

    /// Interpolated total PN at `f` (log-f, linear-dB).
    pub fn spot_total(&self, f: f64) -> f64 {
        crate::grid::interp_log_db(&self.freq_hz, &self.total.pn_dbchz, f)
    }

    /// Interpolated per-source PN at `f`.
    pub fn spot_source(&self, label: &str, f: f64) -> Option<f64> {
        self.source(label)
            .map(|c| crate::grid::interp_log_db(&self.freq_hz, &c.pn_dbchz, f))
    }
}

fn power_sum(freq_hz: &[f64], sources: &[PnColumn]) -> PnColumn {
    let mut total = vec![f64::NEG_INFINITY; freq_hz.len()];
    for col in sources {
        assert_eq!(col.pn_dbchz.len(), freq_hz.len());
        for (t, &db) in total.iter_mut().zip(&col.pn_dbchz) {
            let sum = 10f64.powf(*t / 10.0) + 10f64.powf(db / 10.0);
            *t = if sum > 0.0 {
                10.0 * sum.log10()
            } else {
                f64::NEG_INFINITY
            };
        }
    }
    PnColumn::new("total", total)
}
