//! Conversion matrices for discrete-time LPTV systems.
//!
//! A linear periodically time-variant system with period `K` (in samples) maps
//! the vector of frequency-shifted input spectra `X(Ω - 2πk/K)` to the shifted
//! output spectra through a finite `K×K` complex matrix. Two building blocks
//! cover everything encountered here:
//!
//! * an LTI subsystem contributes a **diagonal** matrix whose entries are the
//!   transfer function evaluated at the shifted frequencies, and
//! * multiplication by an `N`-periodic sequence contributes a
//!   frequency-independent **Toeplitz** (in fact circulant) matrix built from
//!   the DFT of one window period.
//!
//! Feedback loops are closed by solving `(I - L)·H = P` with an LU
//! factorization; the inverse is never formed explicitly.
//!
//! Index convention, shared by every consumer of this module: storage row `r`
//! holds output harmonic `q = K-1-r` and storage column `c` holds input
//! harmonic `k = K-1-c`, so the *bottom* row and *rightmost* column are the
//! baseband harmonic.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::solve::{FactorizeInto, LUFactorized, Solve};
use ndarray_linalg::ReciprocalConditionNum;
use num_complex::Complex64;
use num_integer::Integer;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::transfer::RationalTransfer;

/// One period of a real periodic sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicWindow {
    samples: Vec<f64>,
}

impl PeriodicWindow {
    /// Wrap one period of samples. The period is `samples.len()`.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("periodic window must be non-empty".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("periodic window samples must be finite".into()));
        }
        Ok(Self { samples })
    }

    /// All-ones window of period `n`.
    pub fn all_ones(n: usize) -> Self {
        Self { samples: vec![1.0; n] }
    }

    /// Single unit pulse at `n = 0` within a period of `n`.
    pub fn unit_pulse(n: usize) -> Self {
        let mut samples = vec![0.0; n];
        samples[0] = 1.0;
        Self { samples }
    }

    pub fn period(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Periodic extension `w[n] = w0[n mod N]`.
    pub fn value(&self, n: usize) -> f64 {
        self.samples[n % self.samples.len()]
    }
}

/// `K×K` complex matrix relating frequency-shifted input harmonics (columns)
/// to output harmonics (rows). See the module docs for the index convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionMatrix {
    data: Array2<Complex64>,
}

impl ConversionMatrix {
    /// Wrap a square complex array.
    pub fn from_array(data: Array2<Complex64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch {
                left: data.nrows(),
                right: data.ncols(),
            });
        }
        Ok(Self { data })
    }

    pub fn identity(dim: usize) -> Self {
        Self { data: Array2::eye(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { data: Array2::zeros((dim, dim)) }
    }

    /// Diagonal matrix from entries ordered top (harmonic `K-1`) to bottom
    /// (baseband).
    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut data = Array2::zeros((diag.len(), diag.len()));
        for (i, &d) in diag.iter().enumerate() {
            data[(i, i)] = d;
        }
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Entry in storage coordinates (row 0 is the top of Eq.-style layout).
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.data[(row, col)]
    }

    /// Entry indexed by output harmonic `q` and input harmonic `k`.
    pub fn harmonic_entry(&self, q: usize, k: usize) -> Complex64 {
        let n = self.dim();
        self.data[(n - 1 - q, n - 1 - k)]
    }

    /// Gain from input harmonic `k` to the baseband output harmonic.
    pub fn baseband_gain(&self, k: usize) -> Complex64 {
        self.harmonic_entry(0, k)
    }

    /// The baseband output row in storage order (column `c` holds input
    /// harmonic `K-1-c`).
    pub fn baseband_row(&self) -> ArrayView1<'_, Complex64> {
        self.data.row(self.dim() - 1)
    }

    pub fn as_array(&self) -> ArrayView2<'_, Complex64> {
        self.data.view()
    }

    pub(crate) fn into_array(self) -> Array2<Complex64> {
        self.data
    }

    /// Matrix product `self · rhs` (signals enter from the right).
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        self.check_dim(rhs)?;
        Ok(Self { data: self.data.dot(&rhs.data) })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_dim(rhs)?;
        Ok(Self { data: &self.data + &rhs.data })
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { data: self.data.mapv(|v| v * s) }
    }

    /// `diag(d) · self`: row `r` scaled by `d[r]` (storage order).
    pub fn scale_rows(&self, d: &[Complex64]) -> Self {
        let mut data = self.data.clone();
        for (mut row, &s) in data.rows_mut().into_iter().zip(d) {
            row.mapv_inplace(|v| v * s);
        }
        Self { data }
    }

    /// `self · diag(d)`: column `c` scaled by `d[c]` (storage order).
    pub fn scale_cols(&self, d: &[Complex64]) -> Self {
        let mut data = self.data.clone();
        for (mut col, &s) in data.columns_mut().into_iter().zip(d) {
            col.mapv_inplace(|v| v * s);
        }
        Self { data }
    }

    fn check_dim(&self, rhs: &Self) -> Result<()> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: rhs.dim(),
            });
        }
        Ok(())
    }
}

/// Conversion matrix of an LTI subsystem: diagonal with the transfer function
/// evaluated at `Ω - 2πk/K` for harmonic `k`.
pub fn lti_conversion_matrix(
    tf: &RationalTransfer,
    omega: f64,
    dim: usize,
) -> Result<ConversionMatrix> {
    Ok(ConversionMatrix::from_diagonal(&lti_diagonal(tf, omega, dim)?))
}

/// Diagonal entries of [`lti_conversion_matrix`] in storage order (top row
/// first, i.e. harmonic `K-1` down to baseband).
pub fn lti_diagonal(tf: &RationalTransfer, omega: f64, dim: usize) -> Result<Vec<Complex64>> {
    assert!(dim >= 1, "problem dimension must be at least 1");
    let mut diag = Vec::with_capacity(dim);
    for r in 0..dim {
        let k = dim - 1 - r;
        let omega_k = omega - TAU * k as f64 / dim as f64;
        let v = tf.eval(omega_k).map_err(|_| Error::SingularEvaluation {
            omega: omega_k,
            harmonic: k,
            dim,
        })?;
        diag.push(v);
    }
    Ok(diag)
}

/// Conversion matrix of multiplication by a periodic window: Toeplitz with
/// entry `(i, j) = W0(2π(i-j)/K)/K`, where `W0` is the DFT of one window
/// period extended to the problem dimension.
///
/// The window period must equal or divide `dim`.
pub fn mul_conversion_matrix(window: &PeriodicWindow, dim: usize) -> Result<ConversionMatrix> {
    let n = window.period();
    if n == 0 || dim % n != 0 {
        return Err(Error::IncompatibleWindow { period: n, dim });
    }
    // W0(2πd/K) for d = 0..K; K-periodic in d, so offsets are taken mod K.
    let mut table = vec![Complex64::new(0.0, 0.0); dim];
    for (d, slot) in table.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for sample in 0..dim {
            let w = window.value(sample);
            if w != 0.0 {
                let phase = -TAU * (d as f64) * (sample as f64) / dim as f64;
                acc += w * Complex64::from_polar(1.0, phase);
            }
        }
        *slot = acc / dim as f64;
    }
    let data = Array2::from_shape_fn((dim, dim), |(i, j)| {
        table[(i + dim - j) % dim]
    });
    Ok(ConversionMatrix { data })
}

/// Resampling conversion matrix for a period-`m` single-pulse sequence
/// embedded in an `n`-dimensional problem: `N×N` Toeplitz with entry
/// `(i, j) = W0(2π(i-j)/N)/lcm(N, M)`, `W0` summing the pulse train over one
/// common period `lcm(N, M)`.
///
/// The common period is deliberately *not* adopted as the problem dimension;
/// frequency shifts tied to the beat between the two rates are dropped, which
/// is what keeps the problem size at `N`.
pub fn fractional_resample_matrix(m: usize, n: usize) -> ConversionMatrix {
    assert!(m >= 1 && n >= 1, "resample periods must be at least 1");
    let l = n.lcm(&m);
    let pulses = l / m;
    let mut table = vec![Complex64::new(0.0, 0.0); n];
    for (d, slot) in table.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..pulses {
            let phase = -TAU * (d as f64) * ((p * m) as f64) / n as f64;
            acc += Complex64::from_polar(1.0, phase);
        }
        *slot = acc / l as f64;
    }
    let data = Array2::from_shape_fn((n, n), |(i, j)| table[(i + n - j) % n]);
    ConversionMatrix { data }
}

/// Closed-loop feedback solver: factorizes `I - L` once and solves
/// `(I - L)·H = P` for any number of path matrices.
pub struct ClosedLoopSolver {
    factored: LUFactorized<ndarray::OwnedRepr<Complex64>>,
    cond_estimate: f64,
    dim: usize,
}

impl ClosedLoopSolver {
    /// Condition estimates above this default are treated as a solver failure.
    pub const DEFAULT_COND_THRESHOLD: f64 = 1e12;

    pub fn new(loop_gain: &ConversionMatrix) -> Result<Self> {
        Self::with_threshold(loop_gain, Self::DEFAULT_COND_THRESHOLD)
    }

    pub fn with_threshold(loop_gain: &ConversionMatrix, threshold: f64) -> Result<Self> {
        let dim = loop_gain.dim();
        let mut a = loop_gain.data.mapv(|v| -v);
        for i in 0..dim {
            a[(i, i)] += 1.0;
        }
        let factored = a
            .factorize_into()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let rcond = factored
            .rcond()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let cond_estimate = if rcond > 0.0 { 1.0 / rcond } else { f64::INFINITY };
        if !cond_estimate.is_finite() || cond_estimate > threshold {
            return Err(Error::IllConditioned {
                cond: cond_estimate,
                threshold,
            });
        }
        Ok(Self {
            factored,
            cond_estimate,
            dim,
        })
    }

    /// 1-norm condition estimate of `I - L` from the factorization.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `idx` of `(I - L)^-1`, obtained from one transposed solve
    /// `(I - L)ᵀ·y = e_idx`.
    pub fn resolvent_row(&self, idx: usize) -> Result<Array1<Complex64>> {
        assert!(idx < self.dim);
        let mut e = Array1::zeros(self.dim);
        e[idx] = Complex64::new(1.0, 0.0);
        self.factored
            .solve_t_into(e)
            .map_err(|e| Error::Backend(e.to_string()))
    }

    /// `e_basebandᵀ·(I - L)^-1`: the baseband row of the closed-loop
    /// resolvent, which every output-PSD evaluation consumes.
    pub fn baseband_solution_row(&self) -> Result<Array1<Complex64>> {
        self.resolvent_row(self.dim - 1)
    }

    /// Solve `(I - L)·H = path`.
    pub fn solve(&self, path: &ConversionMatrix) -> Result<ConversionMatrix> {
        if path.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: path.dim(),
            });
        }
        let mut out = Array2::zeros((self.dim, self.dim));
        for j in 0..self.dim {
            let b: Array1<Complex64> = path.data.column(j).to_owned();
            let x = self
                .factored
                .solve_into(b)
                .map_err(|e| Error::Backend(e.to_string()))?;
            out.column_mut(j).assign(&x);
        }
        Ok(ConversionMatrix { data: out })
    }
}

/// `(I - loop_gain)^-1 · path` via a linear solve.
pub fn closed_loop_solve(
    loop_gain: &ConversionMatrix,
    path: &ConversionMatrix,
) -> Result<ConversionMatrix> {
    loop_gain.check_dim(path)?;
    ClosedLoopSolver::new(loop_gain)?.solve(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: Complex64, b: Complex64, eps: f64) {
        assert!(
            (a - b).norm() <= eps,
            "expected {b}, got {a} (|diff| = {:.3e})",
            (a - b).norm()
        );
    }

    #[test]
    fn lti_unity_is_identity() {
        let h = lti_conversion_matrix(&RationalTransfer::unity(), 1.234, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_eq!(h.entry(i, j), Complex64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn lti_delay_k2_at_dc() {
        // z^-1 at Omega = 0 over two harmonics: baseband entry e^{-j0} = 1,
        // harmonic 1 entry e^{-j(0 - pi)} = -1.
        let h = lti_conversion_matrix(&RationalTransfer::delay(1), 0.0, 2).unwrap();
        assert_close(h.harmonic_entry(0, 0), Complex64::new(1.0, 0.0), 1e-15);
        assert_close(h.harmonic_entry(1, 1), Complex64::new(-1.0, 0.0), 1e-15);
        assert_eq!(h.harmonic_entry(0, 1), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn lti_zoh_baseband_is_n_at_dc() {
        let h = lti_conversion_matrix(&RationalTransfer::zoh(6), 0.0, 6).unwrap();
        assert_close(h.baseband_gain(0), Complex64::new(6.0, 0.0), 1e-12);
    }

    #[test]
    fn lti_is_exactly_diagonal() {
        let tf = RationalTransfer::new(vec![0.3, -1.2, 0.8], vec![1.0, -0.4]);
        let h = lti_conversion_matrix(&tf, 2.1, 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(h.entry(i, j), Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn lti_propagates_pole_harmonic() {
        // Integrator pole sits at harmonic 2 when Omega = 2*pi*2/K.
        let tf = RationalTransfer::integrator(1.0);
        let err = lti_conversion_matrix(&tf, TAU * 2.0 / 4.0, 4).unwrap_err();
        match err {
            Error::SingularEvaluation { harmonic, dim, .. } => {
                assert_eq!(harmonic, 2);
                assert_eq!(dim, 4);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn mul_all_ones_is_identity() {
        let h = mul_conversion_matrix(&PeriodicWindow::all_ones(6), 6).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_close(h.entry(i, j), Complex64::new(want, 0.0), 1e-13);
            }
        }
    }

    #[test]
    fn mul_unit_pulse_is_uniform() {
        let h = mul_conversion_matrix(&PeriodicWindow::unit_pulse(4), 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_close(h.entry(i, j), Complex64::new(0.25, 0.0), 1e-15);
            }
        }
    }

    #[test]
    fn mul_two_tap_window_matches_direct_sum() {
        // Window [1, 1, 0, 0]: W0(Omega) = 1 + e^{-j Omega}, entries
        // W0(2*pi*(i-j)/4)/4 by the two-term sum evaluated directly.
        let w = PeriodicWindow::new(vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let h = mul_conversion_matrix(&w, 4).unwrap();
        let w0 = |omega: f64| 1.0 + Complex64::from_polar(1.0, -omega);
        for i in 0..4i64 {
            for j in 0..4i64 {
                let want = w0(TAU * (i - j) as f64 / 4.0) / 4.0;
                assert_close(h.entry(i as usize, j as usize), want, 1e-14);
            }
        }
        assert_close(h.entry(3, 3), Complex64::new(0.5, 0.0), 1e-15);
    }

    #[test]
    fn mul_is_toeplitz_bitwise() {
        let w = PeriodicWindow::new(vec![0.3, -1.0, 2.5]).unwrap();
        let h = mul_conversion_matrix(&w, 6).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(h.entry(i, j), h.entry(i + 1, j + 1));
            }
        }
    }

    #[test]
    fn mul_rejects_incompatible_period() {
        let w = PeriodicWindow::all_ones(4);
        assert!(mul_conversion_matrix(&w, 6).is_err());
    }

    #[test]
    fn lti_composition_consistency() {
        let g = RationalTransfer::new(vec![1.0, 0.25], vec![1.0, -0.5]);
        let h = RationalTransfer::new(vec![0.0, 1.0, 0.4], vec![1.0, 0.2]);
        let omega = 0.73;
        let lhs = lti_conversion_matrix(&g, omega, 5)
            .unwrap()
            .matmul(&lti_conversion_matrix(&h, omega, 5).unwrap())
            .unwrap();
        let rhs = lti_conversion_matrix(&g.product(&h), omega, 5).unwrap();
        for i in 0..5 {
            let a = lhs.entry(i, i);
            let b = rhs.entry(i, i);
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn fractional_m_equals_n_matches_pulse_window() {
        let frac = fractional_resample_matrix(5, 5);
        let pulse = mul_conversion_matrix(&PeriodicWindow::unit_pulse(5), 5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_close(frac.entry(i, j), pulse.entry(i, j), 1e-14);
            }
        }
        assert_close(frac.baseband_gain(0), Complex64::new(0.2, 0.0), 1e-15);
    }

    #[test]
    fn fractional_m_one_is_identity() {
        let frac = fractional_resample_matrix(1, 7);
        for i in 0..7 {
            for j in 0..7 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_close(frac.entry(i, j), Complex64::new(want, 0.0), 1e-13);
            }
        }
    }

    #[test]
    fn fractional_baseband_gain_is_one_over_m() {
        for (m, n) in [(5usize, 28usize), (12, 28), (22, 28), (3, 18)] {
            let frac = fractional_resample_matrix(m, n);
            assert_close(
                frac.baseband_gain(0),
                Complex64::new(1.0 / m as f64, 0.0),
                1e-12,
            );
        }
    }

    #[test]
    fn closed_loop_zero_loop_returns_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = Array2::from_shape_fn((4, 4), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let path = ConversionMatrix::from_array(data).unwrap();
        let h = closed_loop_solve(&ConversionMatrix::zeros(4), &path).unwrap();
        assert_eq!(h, path);
    }

    #[test]
    fn closed_loop_scalar_matches_formula() {
        let l = Complex64::new(0.3, -0.6);
        let p = Complex64::new(-1.1, 0.2);
        let lm = ConversionMatrix::from_diagonal(&[l]);
        let pm = ConversionMatrix::from_diagonal(&[p]);
        let h = closed_loop_solve(&lm, &pm).unwrap();
        let want = p / (Complex64::new(1.0, 0.0) - l);
        assert_close(h.entry(0, 0), want, 1e-15 * want.norm());
    }

    #[test]
    fn closed_loop_matches_neumann_series() {
        // Independent oracle: (I-L)^-1 P = sum_n L^n P for spectral radius < 1.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut rnd = |scale: f64| {
            Complex64::new(
                scale * (rng.random::<f64>() - 0.5),
                scale * (rng.random::<f64>() - 0.5),
            )
        };
        let l_data = Array2::from_shape_fn((3, 3), |_| rnd(0.4));
        let p_data = Array2::from_shape_fn((3, 3), |_| rnd(2.0));
        let l = ConversionMatrix::from_array(l_data.clone()).unwrap();
        let p = ConversionMatrix::from_array(p_data.clone()).unwrap();

        let solved = closed_loop_solve(&l, &p).unwrap();

        let mut series = p_data.clone();
        let mut term = p_data;
        for _ in 0..300 {
            term = l_data.dot(&term);
            series = &series + &term;
            if term.iter().map(|v| v.norm()).fold(0.0, f64::max) < 1e-16 {
                break;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (solved.entry(i, j) - series[(i, j)]).norm() < 1e-9,
                    "entry ({i},{j}) differs from Neumann series"
                );
            }
        }
    }

    #[test]
    fn closed_loop_rejects_singular() {
        // L = I makes I - L singular.
        let l = ConversionMatrix::identity(3);
        let p = ConversionMatrix::identity(3);
        match closed_loop_solve(&l, &p) {
            Err(Error::IllConditioned { .. }) | Err(Error::Backend(_)) => {}
            other => panic!("expected singular failure, got {other:?}"),
        }
    }

    #[test]
    fn closed_loop_reports_condition_estimate() {
        let l = ConversionMatrix::from_diagonal(&[
            Complex64::new(0.5, 0.0),
            Complex64::new(-0.25, 0.1),
        ]);
        let solver = ClosedLoopSolver::new(&l).unwrap();
        assert!(solver.cond_estimate() >= 1.0);
        assert!(solver.cond_estimate() < 1e3);
    }

    #[test]
    fn harmonic_indexing_is_consistent() {
        let mut data = Array2::zeros((3, 3));
        data[(2, 0)] = Complex64::new(9.0, 0.0); // bottom row, leftmost column
        let m = ConversionMatrix::from_array(data).unwrap();
        // Output harmonic 0 (bottom), input harmonic 2 (leftmost).
        assert_abs_diff_eq!(m.harmonic_entry(0, 2).re, 9.0);
        assert_abs_diff_eq!(m.baseband_gain(2).re, 9.0);
        assert_abs_diff_eq!(m.baseband_row()[0].re, 9.0);
    }
}
