//! Frequency grids and interpolation on the (log f, dB) plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::PN_FLOOR_DBCHZ;

/// Default analysis grid: 2^14 log-spaced points.
pub const DEFAULT_GRID_POINTS: usize = 1 << 14;
/// Default lower grid edge in Hz.
pub const DEFAULT_GRID_FMIN_HZ: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpacing {
    Log,
    #[serde(alias = "lin")]
    Linear,
}

/// Strictly increasing frequency grid on `[f_min, f_max]`, endpoints included.
///
/// `f_min` must be positive: the loop integrators and the oscillator noise
/// model are singular at DC, so grids never touch 0.
pub fn frequency_grid(
    f_min: f64,
    f_max: f64,
    points: usize,
    spacing: GridSpacing,
) -> Result<Vec<f64>> {
    if !(f_min > 0.0) || !f_max.is_finite() {
        return Err(Error::Grid(format!(
            "band edges must satisfy 0 < f_min <= f_max, got [{f_min}, {f_max}]"
        )));
    }
    if f_max <= f_min {
        return Err(Error::Grid(format!(
            "f_max ({f_max}) must exceed f_min ({f_min})"
        )));
    }
    if points < 2 {
        return Err(Error::Grid(format!("need at least 2 points, got {points}")));
    }
    let n = points as f64 - 1.0;
    let grid = match spacing {
        GridSpacing::Log => {
            let (lo, hi) = (f_min.ln(), f_max.ln());
            (0..points)
                .map(|i| (lo + (hi - lo) * i as f64 / n).exp())
                .collect()
        }
        GridSpacing::Linear => (0..points)
            .map(|i| f_min + (f_max - f_min) * i as f64 / n)
            .collect(),
    };
    Ok(grid)
}

/// Upper grid edge for a given DCO rate: just inside Nyquist. At exactly
/// `f_dco/2` with an even problem dimension one shifted harmonic lands on the
/// integrators' DC pole (Nyquist is itself a reference-harmonic notch), and
/// points too close leave `I - L` ill-conditioned; a 1e-6 relative margin
/// keeps the solve well away from the pole while losing a negligible sliver
/// of the jitter integration band.
pub fn nyquist_edge(f_dco_hz: f64) -> f64 {
    f_dco_hz / 2.0 * (1.0 - 1e-6)
}

/// The shipped default grid for a given DCO rate: log-spaced from 10 kHz to
/// just inside `f_dco/2`.
pub fn default_grid(f_dco_hz: f64) -> Vec<f64> {
    frequency_grid(
        DEFAULT_GRID_FMIN_HZ,
        nyquist_edge(f_dco_hz),
        DEFAULT_GRID_POINTS,
        GridSpacing::Log,
    )
    .expect("default grid parameters are valid")
}

/// Interpolate a dB curve at `f`, linear in (ln f, dB). Values are clamped to
/// the output floor first so `-inf` markers interpolate sanely; `f` outside
/// the grid clamps to the nearest endpoint.
pub fn interp_log_db(freq: &[f64], db: &[f64], f: f64) -> f64 {
    assert_eq!(freq.len(), db.len());
    assert!(!freq.is_empty());
    let clamp = |v: f64| v.max(PN_FLOOR_DBCHZ);
    if f <= freq[0] {
        return clamp(db[0]);
    }
    if f >= freq[freq.len() - 1] {
        return clamp(db[db.len() - 1]);
    }
    let idx = match freq.binary_search_by(|x| x.partial_cmp(&f).unwrap()) {
        Ok(i) => return clamp(db[i]),
        Err(i) => i,
    };
    let (f0, f1) = (freq[idx - 1], freq[idx]);
    let (y0, y1) = (clamp(db[idx - 1]), clamp(db[idx]));
    let t = (f.ln() - f0.ln()) / (f1.ln() - f0.ln());
    y0 + t * (y1 - y0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_grid_hits_endpoints() {
        let g = frequency_grid(1e4, 1e8, 257, GridSpacing::Log).unwrap();
        assert_eq!(g.len(), 257);
        assert_abs_diff_eq!(g[0], 1e4, epsilon = 1e-6);
        assert_abs_diff_eq!(g[256], 1e8, epsilon = 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_zero_fmin_and_short_grids() {
        assert!(frequency_grid(0.0, 1e6, 16, GridSpacing::Log).is_err());
        assert!(frequency_grid(1e3, 1e6, 1, GridSpacing::Linear).is_err());
        assert!(frequency_grid(1e6, 1e3, 16, GridSpacing::Log).is_err());
    }

    #[test]
    fn interpolation_is_linear_in_log_f() {
        let freq = [1e3, 1e5];
        let db = [-100.0, -140.0];
        // Geometric midpoint maps to the arithmetic dB midpoint.
        assert_abs_diff_eq!(interp_log_db(&freq, &db, 1e4), -120.0, epsilon = 1e-9);
        // Clamping outside the grid.
        assert_abs_diff_eq!(interp_log_db(&freq, &db, 10.0), -100.0);
        assert_abs_diff_eq!(interp_log_db(&freq, &db, 1e9), -140.0);
    }
}
