//! Time-domain oracle: sample-level simulation of the loop of [`crate::pll`]
//! with stochastic noise injection, Welch PSD estimation, and model/
//! simulation comparison.
//!
//! The simulator iterates the DCO-rate difference equations directly: the
//! divider samples the output phase every `N` samples, the PD error is scaled
//! by `K_PD` with white reference/TDC noise added, the proportional path
//! holds the error for one reference period and applies the FPEC gain window,
//! the integral path accumulates with `K_I` (optionally resampled through the
//! delta-sigma chain), shaped DSM quantization noise enters the tuning word
//! through an `M`-sample hold, and the DCO integrates `K_DCO/f_DCO` per
//! sample plus its own accumulated phase noise. The loop is linear, so runs
//! start at the zero-error fixed point and superposition holds exactly;
//! per-source RNG streams are independent so matched seeds reproduce each
//! source's realization regardless of which others are enabled.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::interp_log_db;
use crate::pll::{PllConfig, SourceSet};

const REF_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const DSM_STREAM_SALT: u64 = 0xd1b5_4a32_d192_ed03;
const DCO_STREAM_SALT: u64 = 0x8cb9_2ba7_2f3d_8dd7;

/// Warmup discarded before spectral estimation, in Welch segment lengths.
pub const DEFAULT_WARMUP_SEGMENTS: usize = 20;

/// One simulation run description.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub cfg: PllConfig,
    pub seed: u64,
    /// Total DCO-rate samples to iterate, including warmup.
    pub total_samples: usize,
    /// Leading samples discarded from the returned series.
    pub warmup_samples: usize,
    pub sources: SourceSet,
}

impl SimRun {
    /// Size a run so `wcfg.averages` periodogram segments remain after the
    /// default warmup.
    pub fn for_welch(cfg: PllConfig, seed: u64, sources: SourceSet, wcfg: &WelchConfig) -> Self {
        let warmup_samples = DEFAULT_WARMUP_SEGMENTS * wcfg.segment_len;
        let total_samples = warmup_samples + wcfg.required_samples();
        Self {
            cfg,
            seed,
            total_samples,
            warmup_samples,
            sources,
        }
    }

    fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.total_samples <= self.warmup_samples {
            return Err(Error::Config(format!(
                "total_samples ({}) must exceed warmup_samples ({})",
                self.total_samples, self.warmup_samples
            )));
        }
        Ok(())
    }
}

/// Simulate the loop and return the output phase series (rad) at the DCO
/// rate, warmup discarded.
pub fn simulate(run: &SimRun) -> Result<Vec<f64>> {
    run.validate()?;
    let cfg = &run.cfg;
    let n = cfg.n;
    let m = cfg.m;
    let p = cfg.fpec_len();
    let g = cfg.k_dco_hz_per_lsb / cfg.f_dco_hz();
    let k_pd = cfg.resolved_k_pd();
    let k_i = cfg.resolved_k_i();
    let prop_gain = n as f64 * cfg.k_p0 / p as f64;
    let fractional = cfg.use_fractional_resampling;

    let mut rng_ref = ChaCha8Rng::seed_from_u64(run.seed ^ REF_STREAM_SALT);
    let mut rng_dsm = ChaCha8Rng::seed_from_u64(run.seed ^ DSM_STREAM_SALT);
    let mut rng_dco = ChaCha8Rng::seed_from_u64(run.seed ^ DCO_STREAM_SALT);
    let dco_step = Normal::new(0.0, cfg.dco_noise_variance.sqrt())
        .map_err(|e| Error::Config(format!("DCO noise distribution: {e}")))?;
    let dco_on = run.sources.dco && cfg.dco_noise_variance > 0.0;

    let mut phi_loop = 0.0f64; // DCO phase accumulated from the tuning word
    let mut dco_phase = 0.0f64; // accumulated DCO phase noise
    let mut err_held = 0.0f64; // ZOH_N of the PD error
    let mut acc_i = 0.0f64; // integral accumulator
    let mut dsm_held = 0.0f64; // ZOH_M of the shaped DSM noise
    let (mut d1, mut d2) = (0.0f64, 0.0f64); // DSM dither history for (1 - z^-1)^2
    // Integral-path resampler: accumulator values at the last three DSM
    // ticks; the z^-2M delay reads the value sampled two ticks ago.
    let mut resampled = [0.0f64; 3];

    let mut out = Vec::with_capacity(run.total_samples - run.warmup_samples);
    for sample in 0..run.total_samples {
        if dco_on {
            dco_phase += dco_step.sample(&mut rng_dco);
        }
        let phi_out = phi_loop + dco_phase;
        if !phi_out.is_finite() {
            return Err(Error::Unstable { sample });
        }

        let phase_idx = sample % n;
        if phase_idx == 0 {
            let ref_noise = if run.sources.reference {
                (rng_ref.random::<f64>() - 0.5) / k_pd
            } else {
                0.0
            };
            err_held = k_pd * (ref_noise - phi_out / n as f64);
            acc_i += k_i * err_held;
        }
        if sample % m == 0 {
            if run.sources.dsm {
                let d0 = rng_dsm.random::<f64>() - 0.5;
                dsm_held = d0 - 2.0 * d1 + d2;
                d2 = d1;
                d1 = d0;
            }
            if fractional {
                resampled.rotate_right(1);
                resampled[0] = acc_i;
            }
        }

        let u_int = if fractional { resampled[2] } else { acc_i };
        let u_prop = if phase_idx < p { prop_gain * err_held } else { 0.0 };
        let u = u_prop + u_int + dsm_held;

        if sample >= run.warmup_samples {
            out.push(phi_out);
        }
        phi_loop += g * u;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowShape {
    #[default]
    Hann,
    Rectangular,
}

/// Welch estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WelchConfig {
    /// Segment/FFT length; must be a power of two.
    pub segment_len: usize,
    /// Overlap fraction in `[0, 0.9]`.
    pub overlap: f64,
    pub window: WindowShape,
    /// Periodogram averages the caller wants available.
    pub averages: usize,
}

impl Default for WelchConfig {
    fn default() -> Self {
        Self {
            segment_len: 1 << 14,
            overlap: 0.5,
            window: WindowShape::Hann,
            averages: 500,
        }
    }
}

impl WelchConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.segment_len.is_power_of_two() || self.segment_len < 8 {
            return Err(Error::Config(format!(
                "segment_len must be a power of two >= 8, got {}",
                self.segment_len
            )));
        }
        if !(0.0..=0.9).contains(&self.overlap) {
            return Err(Error::Config(format!(
                "overlap must lie in [0, 0.9], got {}",
                self.overlap
            )));
        }
        if self.averages < 1 {
            return Err(Error::Config("averages must be at least 1".into()));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        ((self.segment_len as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }

    /// Series length needed for `averages` segments.
    pub fn required_samples(&self) -> usize {
        self.segment_len + (self.averages - 1) * self.hop()
    }
}

/// One-sided PSD estimate on an FFT bin grid (DC excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub freq_hz: Vec<f64>,
    /// One-sided density; rad²/Hz for phase series.
    pub psd: Vec<f64>,
    /// Segments actually averaged.
    pub segments: usize,
}

impl PsdEstimate {
    /// Single-sideband phase noise, `10·log10(psd/2)` dBc/Hz.
    pub fn ssb_pn_dbchz(&self) -> Vec<f64> {
        self.psd
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    10.0 * (p / 2.0).log10()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }
}

/// Windowed, overlapped, averaged periodogram with window-power
/// normalization: white input of variance `v` at rate `fs` estimates a flat
/// one-sided `2v/fs`.
pub fn welch_psd(series: &[f64], sample_rate_hz: f64, wcfg: &WelchConfig) -> Result<PsdEstimate> {
    wcfg.validate()?;
    let s = wcfg.segment_len;
    let hop = wcfg.hop();
    let required = wcfg.required_samples();
    if series.len() < required {
        return Err(Error::TooShort {
            len: series.len(),
            required,
        });
    }
    let n_seg = 1 + (series.len() - s) / hop;

    let window: Vec<f64> = match wcfg.window {
        WindowShape::Hann => (0..s)
            .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / s as f64).cos()))
            .collect(),
        WindowShape::Rectangular => vec![1.0; s],
    };
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    // Sum periodograms over fixed segment chunks; chunk results are folded in
    // index order so the estimate is bit-stable regardless of scheduling.
    let chunk = n_seg.div_ceil(8).max(1);
    let starts: Vec<usize> = (0..n_seg).map(|i| i * hop).collect();
    let accumulate = |chunk_starts: &[usize]| -> Vec<f64> {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(s);
        let mut buf = vec![Complex64::new(0.0, 0.0); s];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut acc = vec![0.0f64; s / 2];
        for &start in chunk_starts {
            for (b, (x, w)) in buf
                .iter_mut()
                .zip(series[start..start + s].iter().zip(&window))
            {
                *b = Complex64::new(x * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, v) in acc.iter_mut().zip(buf[1..=s / 2].iter()) {
                *a += v.norm_sqr();
            }
        }
        acc
    };

    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> = starts.par_chunks(chunk).map(accumulate).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = starts.chunks(chunk).map(accumulate).collect();

    let mut acc = vec![0.0f64; s / 2];
    for partial in &partials {
        for (a, v) in acc.iter_mut().zip(partial) {
            *a += v;
        }
    }

    let norm = 1.0 / (n_seg as f64 * sample_rate_hz * window_power);
    let psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let one_sided = if i + 1 == s / 2 { 1.0 } else { 2.0 };
            a * norm * one_sided
        })
        .collect();
    let freq_hz = (1..=s / 2)
        .map(|k| k as f64 * sample_rate_hz / s as f64)
        .collect();
    Ok(PsdEstimate {
        freq_hz,
        psd,
        segments: n_seg,
    })
}

/// Band, exclusions, and thresholds for a model/simulation comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub band_hz: (f64, f64),
    /// Frequencies (Hz) around which bins are excluded; PN dips make dB
    /// differences ill-conditioned there.
    pub notch_hz: Vec<f64>,
    /// Bins excluded on each side of a notch.
    pub notch_halfwidth_bins: usize,
    pub max_abs_db: f64,
    pub mean_abs_db: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            band_hz: (1e5, 2e8),
            notch_hz: Vec::new(),
            notch_halfwidth_bins: 2,
            max_abs_db: 1.5,
            mean_abs_db: 0.5,
        }
    }
}

impl CompareSpec {
    /// Notches at integer multiples of `f_ref_hz` up to the band edge.
    pub fn with_reference_notches(mut self, f_ref_hz: f64) -> Self {
        let mut f = f_ref_hz;
        while f <= self.band_hz.1 * (1.0 + 1e-9) {
            self.notch_hz.push(f);
            f += f_ref_hz;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub max_abs_db: f64,
    pub mean_abs_db: f64,
    /// Frequency of the largest deviation.
    pub worst_freq_hz: f64,
    pub points: usize,
    pub pass: bool,
}

/// Interpolate the model curve onto the estimate's bin grid (linear in
/// (log f, dB)) and report deviation statistics over the band, notch bins
/// excluded.
pub fn compare(
    model_freq_hz: &[f64],
    model_pn_dbchz: &[f64],
    sim: &PsdEstimate,
    spec: &CompareSpec,
) -> Result<CompareReport> {
    assert_eq!(model_freq_hz.len(), model_pn_dbchz.len());
    if sim.freq_hz.len() < 2 {
        return Err(Error::EmptyBand);
    }
    let (lo, hi) = spec.band_hz;
    if !(lo < hi) {
        return Err(Error::Grid(format!("bad comparison band [{lo}, {hi}]")));
    }
    if model_freq_hz[0] > lo || model_freq_hz[model_freq_hz.len() - 1] < hi {
        return Err(Error::BandCoverage {
            lo,
            hi,
            grid_lo: model_freq_hz[0],
            grid_hi: model_freq_hz[model_freq_hz.len() - 1],
        });
    }
    let bin = sim.freq_hz[1] - sim.freq_hz[0];
    let guard = spec.notch_halfwidth_bins as f64 * bin;
    let sim_db = sim.ssb_pn_dbchz();

    let mut max_abs: f64 = 0.0;
    let mut sum_abs = 0.0;
    let mut worst = 0.0;
    let mut points = 0usize;
    for (&f, &db) in sim.freq_hz.iter().zip(&sim_db) {
        if f < lo || f > hi {
            continue;
        }
        if spec
            .notch_hz
            .iter()
            .any(|&notch| (f - notch).abs() <= guard + 0.5 * bin)
        {
            continue;
        }
        let model = interp_log_db(model_freq_hz, model_pn_dbchz, f);
        let delta = (db - model).abs();
        if delta > max_abs {
            max_abs = delta;
            worst = f;
        }
        sum_abs += delta;
        points += 1;
    }
    if points == 0 {
        return Err(Error::EmptyBand);
    }
    let mean_abs = sum_abs / points as f64;
    Ok(CompareReport {
        max_abs_db: max_abs,
        mean_abs_db: mean_abs,
        worst_freq_hz: worst,
        points,
        pass: max_abs <= spec.max_abs_db && mean_abs <= spec.mean_abs_db,
    })
}

const SERIES_MAGIC: &[u8; 8] = b"PNTS0001";

/// Write a phase series as little-endian f64 with an 8-byte magic, the sample
/// rate, and the sample count in the header.
pub fn write_series(path: &Path, sample_rate_hz: f64, series: &[f64]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(SERIES_MAGIC)?;
    file.write_all(&sample_rate_hz.to_le_bytes())?;
    file.write_all(&(series.len() as u64).to_le_bytes())?;
    for v in series {
        file.write_all(&v.to_le_bytes())?;
    }
    file.flush()
}

/// Read a series written by [`write_series`]; returns `(sample_rate_hz, samples)`.
pub fn read_series(path: &Path) -> std::io::Result<(f64, Vec<f64>)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != SERIES_MAGIC {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "bad series magic",
        ));
    }
    let mut buf8 = [0u8; 8];
    file.read_exact(&mut buf8)?;
    let rate = f64::from_le_bytes(buf8);
    file.read_exact(&mut buf8)?;
    let count = u64::from_le_bytes(buf8) as usize;
    let mut series = Vec::with_capacity(count);
    for _ in 0..count {
        file.read_exact(&mut buf8)?;
        series.push(f64::from_le_bytes(buf8));
    }
    Ok((rate, series))
}
