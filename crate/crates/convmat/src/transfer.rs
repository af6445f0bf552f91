//! Rational transfer functions in `z^-1`, evaluated on the unit circle.
//!
//! Coefficient index `i` multiplies `z^-i`. Evaluation at `z = e^{jΩ}` is done
//! by Horner's rule in `w = e^{-jΩ}`. Transfers whose only singularity at
//! `z = 1` is removable (the zero-order hold, notably) must be constructed in
//! their expanded FIR form so the quotient never degenerates to 0/0 on the
//! harmonic grid.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance below which a denominator magnitude counts as a pole hit.
const POLE_TOL: f64 = 1e-12;

/// A rational function of `z^-1` with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransfer {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTransfer {
    /// Build from numerator and denominator coefficient lists in `z^-1`.
    ///
    /// Panics if the denominator is empty or identically zero.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Self {
        assert!(
            den.iter().any(|c| *c != 0.0),
            "denominator must not be identically zero"
        );
        let num = if num.is_empty() { vec![0.0] } else { num };
        Self { num, den }
    }

    /// A finite impulse response `Σ coeffs[i]·z^-i` (denominator 1).
    pub fn fir(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs, vec![1.0])
    }

    /// The constant gain `g`.
    pub fn gain(g: f64) -> Self {
        Self::fir(vec![g])
    }

    /// Unit transfer.
    pub fn unity() -> Self {
        Self::gain(1.0)
    }

    /// A pure delay `z^-k`.
    pub fn delay(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Self::fir(coeffs)
    }

    /// `n`-length zero-order hold `(1 - z^-n)/(1 - z^-1)` in its expanded
    /// finite-sum form `1 + z^-1 + … + z^-(n-1)`, which stays finite at the
    /// removable singularity `z = 1`.
    pub fn zoh(n: usize) -> Self {
        assert!(n >= 1, "zero-order hold length must be at least 1");
        Self::fir(vec![1.0; n])
    }

    /// Accumulator `gain/(1 - z^-1)`.
    pub fn integrator(gain: f64) -> Self {
        Self::new(vec![gain], vec![1.0, -1.0])
    }

    /// Delayed accumulator `gain·z^-1/(1 - z^-1)`.
    pub fn delayed_integrator(gain: f64) -> Self {
        Self::new(vec![0.0, gain], vec![1.0, -1.0])
    }

    /// Product of two transfers (polynomial convolution of both sides).
    pub fn product(&self, other: &Self) -> Self {
        Self::new(
            convolve(&self.num, &other.num),
            convolve(&self.den, &other.den),
        )
    }

    /// Evaluate at `z = e^{jΩ}`.
    ///
    /// Fails when the denominator magnitude vanishes relative to its
    /// coefficient scale: a genuine pole on the unit circle.
    pub fn eval(&self, omega: f64) -> Result<Complex64> {
        let w = Complex64::from_polar(1.0, -omega);
        let den = horner(&self.den, w);
        let scale: f64 = self.den.iter().map(|c| c.abs()).sum();
        if den.norm() <= POLE_TOL * scale {
            return Err(Error::SingularEvaluation {
                omega,
                harmonic: 0,
                dim: 1,
            });
        }
        Ok(horner(&self.num, w) / den)
    }
}

fn horner(coeffs: &[f64], w: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * w + c)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}
