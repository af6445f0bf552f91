//! Conversion-matrix model of an integer-N digital PLL with fast phase-error
//! correction (FPEC).
//!
//! The loop runs at the DCO rate with problem dimension `K = N`. The divider
//! samples the output phase every `N` samples and divides by `N`; the phase
//! detector scales the error by `K_PD`; the proportional path holds the error
//! over one reference period (`ZOH_N`) and multiplies the `N`-periodic FPEC
//! window scaled by `N·K_P0/P`; the integral path accumulates with gain
//! `K_I`; the DCO integrates its tuning word with gain `K_DCO/f_DCO` per
//! sample. Closing the loop:
//!
//! ```text
//! L      = -K_PD · H_DCO · (N·K_P0/P · W_RP · H_ZOH,N + K_I) · W_R1 / N
//! P_REF  =  K_PD · H_DCO · (N·K_P0/P · W_RP · H_ZOH,N + K_I)
//! P_DSM  =  H_DCO · H_ZOH,M
//! P_DCO  =  I
//! H_src  = (I - L)^-1 · P_src
//! ```
//!
//! With the optional fractional-resampling variant the integral path becomes
//! accumulator → period-`M` resampler → `ZOH_M` → `z^-2M`, reinstating the
//! delta-sigma control-code dynamics that the simplified model drops.
//!
//! Only the baseband row of each closed-loop matrix feeds the output PSD, so
//! the per-frequency work solves the single adjoint system
//! `(I - L)ᵀ·y = e_baseband` after one LU factorization; the full-matrix
//! solver in [`crate::cm`] remains the reference implementation and the two
//! routes are tested against each other.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cm::{
    lti_diagonal, mul_conversion_matrix, ClosedLoopSolver, ConversionMatrix, PeriodicWindow,
};
use crate::error::{Error, Result};
use crate::spectra::{
    decorrelation_window, output_psd_from_row, ssb_phase_noise, NoiseKind, NoiseSource, PnColumn,
    PnCurve,
};
use crate::transfer::RationalTransfer;

/// Default phase-detector gain in 1/rad (a 15.16 ps TDC at 35 MHz).
pub const DEFAULT_K_PD: f64 = 300.0;

/// Default white DCO frequency-noise variance (rad² per sample). Calibrated
/// so the default profile's oscillator-only output phase noise is
/// -110 dBc/Hz at 10 MHz offset.
pub const DEFAULT_DCO_NOISE_VARIANCE: f64 = 3.33e-5;

/// Default spot frequency for sweep metrics.
pub const DEFAULT_SPOT_FREQ_HZ: f64 = 1e6;

/// All scalar loop parameters.
///
/// `Option` fields fall back to derived defaults: `p` to `n` (FPEC disabled),
/// `k_i` to `k_p0/32`, and `k_pd` to the value derived from `delta_t_res_s`
/// (or 300/rad when neither is given).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PllConfig {
    /// Reference divide ratio `N = f_DCO/f_REF`.
    pub n: usize,
    /// Delta-sigma divide ratio `M = f_DCO/f_DSM`.
    pub m: usize,
    /// FPEC window length in `[1, N]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Reference frequency in Hz.
    pub f_ref_hz: f64,
    /// Phase-detector gain in 1/rad.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_pd: Option<f64>,
    /// TDC resolution in seconds; `K_PD = 1/(2π·f_REF·Δt_res)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_t_res_s: Option<f64>,
    /// Proportional gain with FPEC disabled.
    pub k_p0: f64,
    /// Integral gain.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_i: Option<f64>,
    /// DCO tuning gain in Hz/LSB.
    pub k_dco_hz_per_lsb: f64,
    /// Variance of the white per-sample DCO phase increment, rad².
    pub dco_noise_variance: f64,
    /// Apply the decorrelation window to upsampled sources.
    pub use_decorrelation: bool,
    /// Model the delta-sigma control-code resampling and delays.
    pub use_fractional_resampling: bool,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self {
            n: 18,
            m: 4,
            p: None,
            f_ref_hz: 35e6,
            k_pd: None,
            delta_t_res_s: None,
            k_p0: 0.4,
            k_i: None,
            k_dco_hz_per_lsb: 4e6,
            dco_noise_variance: DEFAULT_DCO_NOISE_VARIANCE,
            use_decorrelation: true,
            use_fractional_resampling: false,
        }
    }
}

impl PllConfig {
    pub fn f_dco_hz(&self) -> f64 {
        self.n as f64 * self.f_ref_hz
    }

    pub fn f_dsm_hz(&self) -> f64 {
        self.f_dco_hz() / self.m as f64
    }

    /// FPEC window length; `None` means FPEC disabled (`P = N`).
    pub fn fpec_len(&self) -> usize {
        self.p.unwrap_or(self.n)
    }

    /// Resolved phase-detector gain. An explicit `k_pd` wins over
    /// `delta_t_res_s`.
    pub fn resolved_k_pd(&self) -> f64 {
        if let Some(k) = self.k_pd {
            k
        } else if let Some(dt) = self.delta_t_res_s {
            1.0 / (TAU * self.f_ref_hz * dt)
        } else {
            DEFAULT_K_PD
        }
    }

    /// Resolved integral gain (`k_p0/32` unless set).
    pub fn resolved_k_i(&self) -> f64 {
        self.k_i.unwrap_or(self.k_p0 / 32.0)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n < 1 {
            return fail(format!("n must be at least 1, got {}", self.n));
        }
        if self.m < 1 {
            return fail(format!("m must be at least 1, got {}", self.m));
        }
        let p = self.fpec_len();
        if p < 1 || p > self.n {
            return fail(format!("p must lie in [1, n] = [1, {}], got {p}", self.n));
        }
        if !(self.f_ref_hz > 0.0) || !self.f_ref_hz.is_finite() {
            return fail(format!("f_ref_hz must be positive, got {}", self.f_ref_hz));
        }
        if let Some(dt) = self.delta_t_res_s {
            if !(dt > 0.0) {
                return fail(format!("delta_t_res_s must be positive, got {dt}"));
            }
        }
        if !(self.resolved_k_pd() > 0.0) {
            return fail(format!("k_pd must be positive, got {}", self.resolved_k_pd()));
        }
        if !self.k_p0.is_finite() || !self.resolved_k_i().is_finite() {
            return fail("loop gains must be finite".into());
        }
        if !(self.k_dco_hz_per_lsb > 0.0) {
            return fail(format!(
                "k_dco_hz_per_lsb must be positive, got {}",
                self.k_dco_hz_per_lsb
            ));
        }
        if !(self.dco_noise_variance >= 0.0) {
            return fail(format!(
                "dco_noise_variance must be nonnegative, got {}",
                self.dco_noise_variance
            ));
        }
        Ok(())
    }
}

/// Which noise sources contribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSet {
    pub reference: bool,
    pub dsm: bool,
    pub dco: bool,
}

impl Default for SourceSet {
    fn default() -> Self {
        Self::all()
    }
}

impl SourceSet {
    pub fn all() -> Self {
        Self { reference: true, dsm: true, dco: true }
    }

    pub fn only_reference() -> Self {
        Self { reference: true, dsm: false, dco: false }
    }

    pub fn only_dsm() -> Self {
        Self { reference: false, dsm: true, dco: false }
    }

    pub fn only_dco() -> Self {
        Self { reference: false, dsm: false, dco: true }
    }

    pub fn is_empty(&self) -> bool {
        !(self.reference || self.dsm || self.dco)
    }
}

/// Grid execution strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Default for Parallelism {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Parallelism::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            Parallelism::Sequential
        }
    }
}

/// Divider sampling window: a single 1 at `n = 0` in each period of `N`.
/// The divider block multiplies by this window scaled by `1/N`.
pub fn divider_window(n: usize) -> PeriodicWindow {
    assert!(n >= 1);
    PeriodicWindow::unit_pulse(n)
}

/// FPEC window: ones on the first `p` samples of each reference period. The
/// proportional path applies the scalar gain `N·K_P0/P` on top, keeping the
/// window itself binary and the gain-time area per period constant.
pub fn fpec_window(n: usize, p: usize) -> Result<PeriodicWindow> {
    if p < 1 || p > n {
        return Err(Error::Config(format!(
            "FPEC window length must lie in [1, {n}], got {p}"
        )));
    }
    let samples = (0..n).map(|i| if i < p { 1.0 } else { 0.0 }).collect();
    PeriodicWindow::new(samples)
}

/// Path-gain matrices from each noise injection point to the output.
#[derive(Debug, Clone)]
pub struct PathGains {
    pub reference: ConversionMatrix,
    pub dsm: ConversionMatrix,
    pub dco: ConversionMatrix,
}

/// Frequency-independent pieces of the model, built once per analysis.
struct ModelBlocks {
    dim: usize,
    k_pd: f64,
    /// `N·K_P0/P`.
    prop_gain: f64,
    dco_tf: RationalTransfer,
    zoh_n_tf: RationalTransfer,
    zoh_m_tf: RationalTransfer,
    ki_tf: RationalTransfer,
    w_rp: ConversionMatrix,
    /// Resampler matrix and `z^-2M` delay of the fractional integral path.
    frac: Option<(ConversionMatrix, RationalTransfer)>,
}

impl ModelBlocks {
    fn new(cfg: &PllConfig, fractional: bool) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let p = cfg.fpec_len();
        let w_rp = mul_conversion_matrix(&fpec_window(n, p)?, n)?;
        let frac = if fractional {
            Some((
                crate::cm::fractional_resample_matrix(cfg.m, n),
                RationalTransfer::delay(2 * cfg.m),
            ))
        } else {
            None
        };
        Ok(Self {
            dim: n,
            k_pd: cfg.resolved_k_pd(),
            prop_gain: n as f64 * cfg.k_p0 / p as f64,
            dco_tf: RationalTransfer::delayed_integrator(cfg.k_dco_hz_per_lsb / cfg.f_dco_hz()),
            zoh_n_tf: RationalTransfer::zoh(n),
            zoh_m_tf: RationalTransfer::zoh(cfg.m),
            ki_tf: RationalTransfer::integrator(cfg.resolved_k_i()),
            w_rp,
            frac,
        })
    }

    /// Loop filter `N·K_P0/P · W_RP · H_ZOH,N + (integral path)` at `omega`.
    fn loop_filter(&self, omega: f64) -> Result<Array2<Complex64>> {
        let k = self.dim;
        let zoh_n = lti_diagonal(&self.zoh_n_tf, omega, k)?;
        let mut f = self.w_rp.scale_cols(&zoh_n).into_array();
        f.mapv_inplace(|v| v * self.prop_gain);
        let ki = lti_diagonal(&self.ki_tf, omega, k)?;
        match &self.frac {
            None => {
                for i in 0..k {
                    f[(i, i)] += ki[i];
                }
            }
            Some((resample, delay_tf)) => {
                let zoh_m = lti_diagonal(&self.zoh_m_tf, omega, k)?;
                let delay = lti_diagonal(delay_tf, omega, k)?;
                let row_scale: Vec<Complex64> =
                    zoh_m.iter().zip(&delay).map(|(a, b)| a * b).collect();
                let integral = resample.scale_rows(&row_scale).scale_cols(&ki);
                f += &integral.into_array();
            }
        }
        Ok(f)
    }

    /// Loop gain `L`, reference path `P_REF`, and the diagonal of `P_DSM`.
    fn assemble(&self, omega: f64) -> Result<(ConversionMatrix, ConversionMatrix, Vec<Complex64>)> {
        let k = self.dim;
        let mut p_ref = self.loop_filter(omega)?;
        let dco = lti_diagonal(&self.dco_tf, omega, k)?;
        for (i, mut row) in p_ref.rows_mut().into_iter().enumerate() {
            let s = self.k_pd * dco[i];
            row.mapv_inplace(|v| v * s);
        }
        // Right-multiplying by the divider W_R1/N replaces every column with
        // the row sum scaled by 1/N²; the leading minus carries the negative
        // feedback.
        let scale = -1.0 / (k as f64 * k as f64);
        let mut l = Array2::zeros((k, k));
        for (i, row) in p_ref.rows().into_iter().enumerate() {
            let v = row.sum() * scale;
            l.row_mut(i).fill(v);
        }
        let zoh_m = lti_diagonal(&self.zoh_m_tf, omega, k)?;
        let p_dsm: Vec<Complex64> = dco.iter().zip(&zoh_m).map(|(d, z)| d * z).collect();
        Ok((
            ConversionMatrix::from_array(l).expect("square"),
            ConversionMatrix::from_array(p_ref).expect("square"),
            p_dsm,
        ))
    }
}

/// LTI-like loop gain `L` of the simplified model at `omega` (rad/sample).
pub fn loop_gain(cfg: &PllConfig, omega: f64) -> Result<ConversionMatrix> {
    let blocks = ModelBlocks::new(cfg, false)?;
    let (l, _, _) = blocks.assemble(omega)?;
    Ok(l)
}

/// Path gains from each noise source to the output at `omega` (simplified
/// model).
pub fn path_gains(cfg: &PllConfig, omega: f64) -> Result<PathGains> {
    let blocks = ModelBlocks::new(cfg, false)?;
    let (_, p_ref, p_dsm) = blocks.assemble(omega)?;
    Ok(PathGains {
        reference: p_ref,
        dsm: ConversionMatrix::from_diagonal(&p_dsm),
        dco: ConversionMatrix::identity(cfg.n),
    })
}

struct PreparedSource {
    source: NoiseSource,
    /// Decorrelation conversion matrix; `None` when the correction is the
    /// identity (coprime rates, or decorrelation disabled).
    w_u: Option<ConversionMatrix>,
}

fn prepare_sources(cfg: &PllConfig, sources: SourceSet) -> Result<Vec<PreparedSource>> {
    if sources.is_empty() {
        return Err(Error::Config("at least one noise source must be enabled".into()));
    }
    let mut out = Vec::new();
    let mut push = |src: NoiseSource| -> Result<()> {
        let l = src.upsample();
        let w_u = if cfg.use_decorrelation && l.gcd(&cfg.n) > 1 {
            Some(mul_conversion_matrix(
                &decorrelation_window(l, cfg.n),
                cfg.n,
            )?)
        } else {
            None
        };
        out.push(PreparedSource { source: src, w_u });
        Ok(())
    };
    if sources.reference {
        push(NoiseSource::tdc_reference(cfg.resolved_k_pd(), cfg.n))?;
    }
    if sources.dsm {
        push(NoiseSource::dsm_quantization(cfg.m))?;
    }
    if sources.dco {
        push(NoiseSource::dco_phase(cfg.dco_noise_variance))?;
    }
    Ok(out)
}

/// Per-frequency diagnostics alongside the PN curve.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub pn: PnCurve,
    /// Condition estimate of `I - L` at each grid point.
    pub cond_estimates: Vec<f64>,
    /// Wall time spent on each grid point, nanoseconds.
    pub wall_ns: Vec<u64>,
}

struct PointOutput {
    psd: Vec<f64>,
    cond: f64,
    wall_ns: u64,
}

fn analyze_point(
    blocks: &ModelBlocks,
    prepared: &[PreparedSource],
    omega: f64,
) -> Result<PointOutput> {
    let start = Instant::now();
    let k = blocks.dim;
    let (l, p_ref, p_dsm) = blocks.assemble(omega)?;
    let solver = ClosedLoopSolver::new(&l)?;
    // Only the baseband output row reaches the PSD sum; one adjoint solve
    // gives y = e_basebandᵀ·(I - L)^-1 for all three paths.
    let y = solver.baseband_solution_row()?;
    let mut psd = Vec::with_capacity(prepared.len());
    for prep in prepared {
        let row: Array1<Complex64> = match prep.source.kind() {
            NoiseKind::Reference => y.dot(&p_ref.as_array()),
            NoiseKind::Dsm => Array1::from_iter(y.iter().zip(&p_dsm).map(|(a, b)| a * b)),
            NoiseKind::Dco | NoiseKind::Custom => y.clone(),
        };
        let row = match &prep.w_u {
            Some(w_u) => row.dot(&w_u.as_array()),
            None => row,
        };
        let s = output_psd_from_row(
            row.as_slice().expect("contiguous"),
            &|o| prep.source.upsampled_psd(o),
            omega,
            k,
        );
        psd.push(s);
    }
    Ok(PointOutput {
        psd,
        cond: solver.cond_estimate(),
        wall_ns: start.elapsed().as_nanos() as u64,
    })
}

fn validate_grid(cfg: &PllConfig, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Grid(format!(
            "analysis grid needs at least 2 points, got {}",
            grid.len()
        )));
    }
    let nyquist = cfg.f_dco_hz() / 2.0;
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Grid("grid must be strictly increasing".into()));
        }
    }
    if !(grid[0] > 0.0) || grid[grid.len() - 1] > nyquist * (1.0 + 1e-12) {
        return Err(Error::Grid(format!(
            "grid must lie within (0, f_DCO/2] = (0, {nyquist:.6e}]"
        )));
    }
    Ok(())
}

fn run_analysis(
    cfg: &PllConfig,
    grid: &[f64],
    sources: SourceSet,
    fractional: bool,
    parallelism: Parallelism,
) -> Result<AnalysisResult> {
    validate_grid(cfg, grid)?;
    let blocks = ModelBlocks::new(cfg, fractional)?;
    let prepared = prepare_sources(cfg, sources)?;
    let f_dco = cfg.f_dco_hz();

    let eval = |&f: &f64| -> Result<PointOutput> {
        let omega = TAU * f / f_dco;
        analyze_point(&blocks, &prepared, omega).map_err(|e| e.at_frequency(f))
    };

    let points: Vec<PointOutput> = match parallelism {
        Parallelism::Sequential => grid.iter().map(eval).collect::<Result<_>>()?,
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => grid.par_iter().map(eval).collect::<Result<_>>()?,
    };

    let mut columns: Vec<PnColumn> = prepared
        .iter()
        .map(|p| PnColumn::new(p.source.kind().label(), Vec::with_capacity(grid.len())))
        .collect();
    let mut cond = Vec::with_capacity(grid.len());
    let mut wall = Vec::with_capacity(grid.len());
    for point in &points {
        for (col, &s) in columns.iter_mut().zip(&point.psd) {
            col.pn_dbchz.push(ssb_phase_noise(s, f_dco));
        }
        cond.push(point.cond);
        wall.push(point.wall_ns);
    }

    let mut pn = PnCurve::from_sources(grid.to_vec(), columns);
    pn.compute_jitter(grid[0], grid[grid.len() - 1], f_dco)?;
    Ok(AnalysisResult {
        pn,
        cond_estimates: cond,
        wall_ns: wall,
    })
}

/// Output PN over a frequency grid (Hz) with the simplified integral path.
pub fn analyze(cfg: &PllConfig, grid: &[f64], sources: SourceSet) -> Result<AnalysisResult> {
    run_analysis(cfg, grid, sources, false, Parallelism::default())
}

/// [`analyze`] with an explicit execution strategy.
pub fn analyze_with(
    cfg: &PllConfig,
    grid: &[f64],
    sources: SourceSet,
    parallelism: Parallelism,
) -> Result<AnalysisResult> {
    run_analysis(cfg, grid, sources, false, parallelism)
}

/// Output PN with the fractional-resampling integral path. Requires
/// `cfg.use_fractional_resampling`.
pub fn analyze_fractional(
    cfg: &PllConfig,
    grid: &[f64],
    sources: SourceSet,
) -> Result<AnalysisResult> {
    if !cfg.use_fractional_resampling {
        return Err(Error::Config(
            "analyze_fractional requires use_fractional_resampling = true".into(),
        ));
    }
    run_analysis(cfg, grid, sources, true, Parallelism::default())
}

/// [`analyze_fractional`] with an explicit execution strategy.
pub fn analyze_fractional_with(
    cfg: &PllConfig,
    grid: &[f64],
    sources: SourceSet,
    parallelism: Parallelism,
) -> Result<AnalysisResult> {
    if !cfg.use_fractional_resampling {
        return Err(Error::Config(
            "analyze_fractional requires use_fractional_resampling = true".into(),
        ));
    }
    run_analysis(cfg, grid, sources, true, parallelism)
}

/// Swept parameter for [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// FPEC window length `P`.
    FpecLen,
    /// Delta-sigma divide ratio `M`.
    DsmRatio,
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepParam::FpecLen => write!(f, "P"),
            SweepParam::DsmRatio => write!(f, "M"),
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "P" | "p" => Ok(SweepParam::FpecLen),
            "M" | "m" => Ok(SweepParam::DsmRatio),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?}; expected P or M"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    /// Total PN at the spot frequency, dBc/Hz.
    pub spot_pn_dbchz: f64,
    /// Total RMS jitter over the grid extent, seconds.
    pub rms_jitter_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub param: SweepParam,
    pub spot_freq_hz: f64,
    pub jitter_band_hz: (f64, f64),
    pub rows: Vec<SweepRow>,
}

/// Run one analysis per parameter value, tabulating spot PN and RMS jitter.
/// Honors `cfg.use_fractional_resampling` for the integral-path variant.
pub fn sweep(
    cfg: &PllConfig,
    param: SweepParam,
    values: &[usize],
    grid: &[f64],
    sources: SourceSet,
    spot_freq_hz: f64,
) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one parameter value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut c = cfg.clone();
        match param {
            SweepParam::FpecLen => c.p = Some(value),
            SweepParam::DsmRatio => c.m = value,
        }
        let result = run_analysis(&c, grid, sources, c.use_fractional_resampling, Parallelism::default())?;
        rows.push(SweepRow {
            value,
            spot_pn_dbchz: result.pn.spot_total(spot_freq_hz),
            rms_jitter_s: result.pn.total.jitter_s.expect("jitter computed"),
        });
    }
    Ok(SweepTable {
        param,
        spot_freq_hz,
        jitter_band_hz: (grid[0], grid[grid.len() - 1]),
        rows,
    })
}
