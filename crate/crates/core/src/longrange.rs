//! Long-range phase: iterates `σ_j` of the eikonal equation, the phase
//! `ϑ(x,k) = ∫₀ˣ σ`, and the residual symbol `𝐯 = n k^{n−1}(σ_j − σ_{j+1})`.
//!
//! The coefficients are those of `B` (ungauged) by default; the gauged ones
//! can be selected to compare with the short-range construction.

use num_complex::Complex64 as C;

use crate::error::{Error, Result};
use crate::liouville::{binom, richardson_derivative, OperatorCoefficients};
use crate::quad::adaptive_gl;

/// Highest supported iteration index.
pub const J_MAX: usize = 8;

/// Which coefficient set feeds the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficients {
    Plain,
    Gauged,
}

/// `σ_j` evaluator bound to an operator.
#[derive(Debug, Clone, Copy)]
pub struct PhaseIteration<'a> {
    pub op: &'a OperatorCoefficients,
    pub source: Coefficients,
}

impl<'a> PhaseIteration<'a> {
    pub fn new(op: &'a OperatorCoefficients) -> Self {
        Self { op, source: Coefficients::Plain }
    }

    pub fn gauged(op: &'a OperatorCoefficients) -> Self {
        Self { op, source: Coefficients::Gauged }
    }

    fn coeffs(&self, x: f64) -> Result<Vec<C>> {
        match self.source {
            Coefficients::Plain => self.op.b_coefficients(x),
            Coefficients::Gauged => self.op.gauged_coefficients(x),
        }
    }

    /// `σ_0, …, σ_j` at `x`.
    pub fn sigmas(&self, j: usize, x: f64, k: f64) -> Result<Vec<C>> {
        let b = self.coeffs(x)?;
        sigma_sequence(&b, self.op.n(), j, k)
    }

    pub fn sigma(&self, j: usize, x: f64, k: f64) -> Result<C> {
        Ok(self.sigmas(j, x, k)?[j])
    }

    /// `∂_x^l σ_j` by Richardson-extrapolated differences (`l ≤ 2`).
    pub fn sigma_derivative(&self, j: usize, l: usize, x: f64, k: f64) -> Result<C> {
        if l > 2 {
            return Err(Error::Config("sigma derivatives are provided for l <= 2".into()));
        }
        self.sigma(j, x, k)?;
        let h = 0.05 * (1.0 + x.abs());
        let re = richardson_derivative(&|y| self.sigma(j, y, k).map(|s| s.re).unwrap_or(f64::NAN), x, l, h);
        let im = richardson_derivative(&|y| self.sigma(j, y, k).map(|s| s.im).unwrap_or(f64::NAN), x, l, h);
        Ok(C::new(re, im))
    }

    /// `ϑ_j(x,k) = ∫₀ˣ σ_j(y,k) dy`.
    pub fn theta(&self, j: usize, x: f64, k: f64) -> Result<C> {
        self.sigma(j, 0.0, k)?;
        if x == 0.0 {
            return Ok(C::new(0.0, 0.0));
        }
        // panels [0, 1], [1, 2], [2, 4], ... keep the adaptive rule local
        let sign = x.signum();
        let end = x.abs();
        let mut a = 0.0;
        let mut b: f64 = 1.0;
        let mut acc = C::new(0.0, 0.0);
        let f_re = |y: f64| self.sigma(j, sign * y, k).map(|s| s.re).unwrap_or(f64::NAN);
        let f_im = |y: f64| self.sigma(j, sign * y, k).map(|s| s.im).unwrap_or(f64::NAN);
        while a < end {
            let hi = b.min(end);
            acc += C::new(adaptive_gl(&f_re, a, hi, 1e-13), adaptive_gl(&f_im, a, hi, 1e-13));
            a = hi;
            b *= 2.0;
        }
        if !(acc.re.is_finite() && acc.im.is_finite()) {
            return Err(Error::Overflow(format!("phase integral failed at x = {x}")));
        }
        Ok(acc * sign)
    }

    /// `𝐯(x,k) = n k^{n−1}(σ_j − σ_{j+1})`.
    pub fn residual_symbol(&self, j: usize, x: f64, k: f64) -> Result<C> {
        let s = self.sigmas(j + 1, x, k)?;
        let n = self.op.n();
        Ok((s[j] - s[j + 1]) * n as f64 * k.powi(n as i32 - 1))
    }

    /// Right side of the eikonal expression with `σ` inserted:
    /// `n k^{n−1}σ + Σ_{m≥2} C(n,m) σᵐ k^{n−m} + Σ_{m<n} b_m (k+σ)ᵐ`.
    pub fn eikonal(&self, sigma: C, x: f64, k: f64) -> Result<C> {
        let b = self.coeffs(x)?;
        Ok(eikonal_expression(&b, self.op.n(), sigma, k))
    }
}

fn eikonal_expression(b: &[C], n: usize, sigma: C, k: f64) -> C {
    let mut v = sigma * n as f64 * k.powi(n as i32 - 1);
    for m in 2..=n {
        v += sigma.powi(m as i32) * binom(n, m) * k.powi((n - m) as i32);
    }
    let ks = sigma + k;
    for (m, bm) in b.iter().enumerate().take(n) {
        v += bm * ks.powi(m as i32);
    }
    v
}

/// The recursion with given coefficient values `b_0, …, b_{n−1}` (extra entries ignored).
pub fn sigma_sequence(b: &[C], n: usize, j: usize, k: f64) -> Result<Vec<C>> {
    if k == 0.0 {
        return Err(Error::SingularArgument("k = 0 makes the dispersion n k^(n-1) vanish".into()));
    }
    if j > J_MAX {
        return Err(Error::Config(format!("iteration index {j} exceeds {J_MAX}")));
    }
    if n == 0 {
        return Err(Error::Config("the phase iteration needs n >= 1".into()));
    }
    let lead = n as f64 * k.powi(n as i32 - 1);
    let mut out = vec![C::new(0.0, 0.0)];
    for _ in 0..j {
        let s = *out.last().unwrap();
        let mut rhs = C::new(0.0, 0.0);
        for p in 2..=n {
            rhs -= s.powi(p as i32) * binom(n, p) * k.powi((n - p) as i32);
        }
        let ks = s + k;
        for (m, bm) in b.iter().enumerate().take(n) {
            rhs -= bm * ks.powi(m as i32);
        }
        out.push(rhs / lead);
    }
    Ok(out)
}

/// `σ_j(x,k)` for the ungauged coefficients.
pub fn sigma_iterate(op: &OperatorCoefficients, j: usize, x: f64, k: f64) -> Result<C> {
    PhaseIteration::new(op).sigma(j, x, k)
}

/// `ϑ_j(x,k)` for the ungauged coefficients.
pub fn theta_phase(op: &OperatorCoefficients, j: usize, x: f64, k: f64) -> Result<C> {
    PhaseIteration::new(op).theta(j, x, k)
}

/// `𝐯(x,k)` for the ungauged coefficients.
pub fn residual_symbol(op: &OperatorCoefficients, j: usize, x: f64, k: f64) -> Result<C> {
    PhaseIteration::new(op).residual_symbol(j, x, k)
}

/// Smallest `j` with `j ρ > 1`.
pub fn iterations_needed(rho: f64) -> usize {
    ((1.0 / rho).floor() as usize + 1).min(J_MAX)
}

/// Log-log slope of `|σ_j − σ_{j−1}|` over a geometric grid on `[x_lo, x_hi]`.
pub fn difference_slope(it: &PhaseIteration, j: usize, k: f64, x_lo: f64, x_hi: f64, points: usize) -> Result<f64> {
    let mut lx = Vec::with_capacity(points);
    let mut ly = Vec::with_capacity(points);
    for i in 0..points {
        let x = x_lo * (x_hi / x_lo).powf(i as f64 / (points - 1) as f64);
        let s = it.sigmas(j, x, k)?;
        lx.push(x.ln());
        ly.push((s[j] - s[j - 1]).norm().ln());
    }
    Ok(crate::quad::linear_fit(&lx, &ly).0)
}
