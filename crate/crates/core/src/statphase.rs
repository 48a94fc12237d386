//! One-sided stationary phase: `𝒥(N) = ∫₀^∞ e^{iNω(y)} g(y) dy` with a
//! non-degenerate stationary point at `y = 0` and `g` supported in `[0, a]`.
//!
//! [`evaluate_j`] integrates directly, [`leading_term`] gives the Fresnel
//! term, and [`verify_remainder`] measures the remainder against the bound
//! shape `B(N) = (κ^{−7/2}ω₂^{3/2}ω₃g₀ + κ^{−2}ω₂g₁)|N|^{−1}(1 + |ln|ω₀N||)`.

use std::sync::OnceLock;

use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, linear_fit};
use crate::taylor::Jet;

/// A smooth real function known through its Taylor jets.
pub trait Smooth: Sync {
    fn jet(&self, y: f64, len: usize) -> Jet<f64>;

    fn value(&self, y: f64) -> f64 {
        self.jet(y, 1).value()
    }

    fn derivative(&self, y: f64, k: usize) -> f64 {
        self.jet(y, k + 1).derivative_at(k)
    }

    /// Radius `a` with `g(y) = 0` for `y ≥ a`, for amplitudes.
    fn support(&self) -> Option<f64> {
        None
    }
}

/// `ω(y) = Σ c_j y^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPhase(pub Vec<f64>);

impl PolyPhase {
    pub fn quadratic() -> Self {
        PolyPhase(vec![0.0, 0.0, 1.0])
    }

    /// `y² + ε y³`.
    pub fn cubic(eps: f64) -> Self {
        PolyPhase(vec![0.0, 0.0, 1.0, eps])
    }
}

impl Smooth for PolyPhase {
    fn jet(&self, y: f64, len: usize) -> Jet<f64> {
        let v = Jet::variable(y, len);
        self.0.iter().rev().fold(Jet::zero(len), |acc, &c| acc * v + Jet::constant(c, len))
    }

    fn value(&self, y: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * y + c)
    }
}

/// `g(y) = e^{−c y} exp(1 − 1/(1 − (y/a)²))` for `|y| < a`, zero otherwise.
/// `g(0) = 1` and `g'(0) = −c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub width: f64,
    pub tilt: f64,
}

impl Smooth for Bump {
    fn jet(&self, y: f64, len: usize) -> Jet<f64> {
        if y.abs() >= self.width {
            return Jet::zero(len);
        }
        let u = Jet::variable(y, len).scale(1.0 / self.width);
        let inner = (Jet::constant(1.0, len) - u * u).recip().scale(-1.0) + Jet::constant(1.0, len);
        (inner + Jet::variable(y, len).scale(-self.tilt)).exp()
    }

    fn value(&self, y: f64) -> f64 {
        let u = y / self.width;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 - 1.0 / (1.0 - u * u) - self.tilt * y).exp()
    }

    fn support(&self) -> Option<f64> {
        Some(self.width)
    }
}

/// Equal to 1 on `[0, a/2]`, smooth step down to 0 at `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub width: f64,
}

impl Plateau {
    fn step(u: Jet<f64>) -> Jet<f64> {
        // e^{−1/u} / (e^{−1/u} + e^{−1/(1−u)}) written as 1 / (1 + e^{1/u − 1/(1−u)})
        let len = u.len();
        let one = Jet::constant(1.0, len);
        let e = (u.recip() - (one - u).recip()).exp();
        (one + e).recip()
    }
}

impl Smooth for Plateau {
    fn jet(&self, y: f64, len: usize) -> Jet<f64> {
        let h = 0.5 * self.width;
        let u = (self.width - y.abs()) / h;
        if u >= 1.0 {
            return Jet::constant(1.0, len);
        }
        if u <= 0.0 {
            return Jet::zero(len);
        }
        let sign = if y < 0.0 { 1.0 } else { -1.0 };
        let uj = Jet::variable(u, len);
        // chain rule through u = (a − |y|)/h: rescale the jet coefficients
        let mut coeffs = Self::step(uj).coeffs().to_vec();
        let mut f = 1.0;
        for c in coeffs.iter_mut() {
            *c *= f;
            f *= sign / h;
        }
        Jet::from_coeffs(&coeffs)
    }

    fn support(&self) -> Option<f64> {
        Some(self.width)
    }
}

/// `e^{−βy²}`, cut where it drops below `10⁻¹⁸`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAmplitude {
    pub beta: f64,
}

impl Smooth for GaussianAmplitude {
    fn jet(&self, y: f64, len: usize) -> Jet<f64> {
        let v = Jet::variable(y, len);
        (v * v).scale(-self.beta).exp()
    }

    fn value(&self, y: f64) -> f64 {
        (-self.beta * y * y).exp()
    }

    fn support(&self) -> Option<f64> {
        Some((41.5 / self.beta).sqrt())
    }
}

/// Any jet map, with an optional support radius.
pub struct JetFn<F> {
    pub f: F,
    pub support: Option<f64>,
}

impl<F: Fn(Jet<f64>) -> Jet<f64> + Sync> Smooth for JetFn<F> {
    fn jet(&self, y: f64, len: usize) -> Jet<f64> {
        (self.f)(Jet::variable(y, len))
    }

    fn support(&self) -> Option<f64> {
        self.support
    }
}

/// `y ↦ f(y₀ + s·y)` with `s = ±1`: moves an interior stationary point to the origin.
pub struct Shifted<'a> {
    pub inner: &'a dyn Smooth,
    pub y0: f64,
    pub sign: f64,
    pub support: Option<f64>,
}

impl Smooth for Shifted<'_> {
    fn jet(&self, y: f64, len: usize) -> Jet<f64> {
        let mut coeffs = self.inner.jet(self.y0 + self.sign * y, len).coeffs().to_vec();
        let mut f = 1.0;
        for c in coeffs.iter_mut() {
            *c *= f;
            f *= self.sign;
        }
        Jet::from_coeffs(&coeffs)
    }

    fn value(&self, y: f64) -> f64 {
        self.inner.value(self.y0 + self.sign * y)
    }

    fn support(&self) -> Option<f64> {
        self.support
    }
}

const PANEL_LIMIT: usize = 20_000_000;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(12))
}

fn support_of(g: &dyn Smooth) -> Result<f64> {
    match g.support() {
        Some(a) if a > 0.0 && a.is_finite() => Ok(a),
        _ => Err(Error::Precondition("the amplitude needs a finite support radius".into())),
    }
}

/// Checks `ω'(0) = 0` and a constant sign of `ω''` on `[0, a]`; returns that sign.
fn check_phase(omega: &dyn Smooth, a: f64) -> Result<f64> {
    let w2 = omega.derivative(0.0, 2);
    let w1 = omega.derivative(0.0, 1);
    if w1.abs() > 1e-10 * (1.0 + w2.abs()) {
        return Err(Error::Precondition(format!("omega'(0) = {w1} is not zero")));
    }
    let s = w2.signum();
    for i in 0..=512 {
        let d = omega.derivative(a * i as f64 / 512.0, 2);
        if d == 0.0 || d.signum() != s || !d.is_finite() {
            return Err(Error::Precondition(format!("omega'' vanishes or changes sign near y = {}", a * i as f64 / 512.0)));
        }
    }
    Ok(s)
}

/// Solves `s(ω(y) − ω(0)) = target` on `[lo, hi]` (monotone increasing there).
fn invert(omega: &dyn Smooth, w0: f64, s: f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let f = |y: f64| s * (omega.value(y) - w0) - target;
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fy = f(y);
        if fy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let d = s * omega.derivative(y, 1);
        let mut next = if d > 0.0 { y - fy / d } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            return next;
        }
        y = next;
    }
    y
}

/// `𝒥(N)` on `[0, a]` by Gauss–Legendre panels that end where the phase has
/// advanced by `π`, capped at `a/64` in length.
pub fn evaluate_j(omega: &dyn Smooth, g: &dyn Smooth, n_big: f64) -> Result<C> {
    let a = support_of(g)?;
    let s = check_phase(omega, a)?;
    let w0 = omega.value(0.0);
    if n_big == 0.0 {
        return Ok(C::new(crate::quad::adaptive_gl(&|y: f64| g.value(y), 0.0, a, 1e-14), 0.0));
    }
    let span = s * (omega.value(a) - w0);
    let step = std::f64::consts::PI / n_big.abs();
    let count = (span / step).floor() as usize;
    if count > PANEL_LIMIT {
        return Err(Error::Precondition(format!("{count} phase panels exceed the limit {PANEL_LIMIT}")));
    }
    let mut ends = Vec::with_capacity(count + 2);
    ends.push(0.0);
    let mut prev = 0.0;
    for m in 1..=count {
        let y = invert(omega, w0, s, m as f64 * step, prev, a);
        if y > prev {
            ends.push(y);
            prev = y;
        }
    }
    if a > prev {
        ends.push(a);
    }
    let (xs, ws) = rule();
    let cap = a / 64.0;
    let mut acc = C::new(0.0, 0.0);
    for win in ends.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let pieces = ((hi - lo) / cap).ceil().max(1.0) as usize;
        let h = (hi - lo) / pieces as f64;
        for p in 0..pieces {
            let mid = lo + (p as f64 + 0.5) * h;
            let mut part = C::new(0.0, 0.0);
            for (x, w) in xs.iter().zip(ws) {
                let y = mid + 0.5 * h * x;
                let gy = g.value(y);
                if gy != 0.0 {
                    part += C::from_polar(w * gy, n_big * (omega.value(y) - w0));
                }
            }
            acc += part * (0.5 * h);
        }
    }
    Ok(acc * C::from_polar(1.0, n_big * w0))
}

/// `𝒥` over `[−a, a]` around an interior stationary point `y₀`.
pub fn evaluate_j_full(omega: &dyn Smooth, g: &dyn Smooth, y0: f64, a: f64, n_big: f64) -> Result<C> {
    let mut total = C::new(0.0, 0.0);
    for sign in [1.0, -1.0] {
        let w = Shifted { inner: omega, y0, sign, support: None };
        let h = Shifted { inner: g, y0, sign, support: Some(a) };
        total += evaluate_j(&w, &h, n_big)?;
    }
    Ok(total)
}

/// `2⁻¹ e^{iτπ/4 + iNω(0)} (2π)^{1/2} |ω''(0)N|^{−1/2} g(0)`, `τ = sgn(ω''(0)N)`;
/// doubled when `full_line` is set.
pub fn leading_term(omega: &dyn Smooth, g: &dyn Smooth, n_big: f64, full_line: bool) -> C {
    let g0 = g.value(0.0);
    if g0 == 0.0 {
        return C::new(0.0, 0.0);
    }
    let w2 = omega.derivative(0.0, 2);
    let tau = (w2 * n_big).signum();
    let phase = tau * std::f64::consts::FRAC_PI_4 + n_big * omega.value(0.0);
    let modulus = 0.5 * (2.0 * std::f64::consts::PI).sqrt() * (w2 * n_big).abs().powf(-0.5) * g0;
    C::from_polar(if full_line { 2.0 * modulus } else { modulus }, phase)
}

/// Extremal constants on `[0, a]`. `ω₀ = max|ω − ω(0)|` (the bound assumes `ω(0) = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub kappa: f64,
    pub omega0: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub g0: f64,
    pub g1: f64,
    pub a: f64,
}

impl BoundConstants {
    /// `B(N)`.
    pub fn bound_shape(&self, n_big: f64) -> f64 {
        let c = self.kappa.powf(-3.5) * self.omega2.powf(1.5) * self.omega3 * self.g0
            + self.kappa.powi(-2) * self.omega2 * self.g1;
        c / n_big.abs() * (1.0 + (self.omega0 * n_big.abs()).ln().abs())
    }
}

/// Max (or min) of `|f|` on `[0, a]`: grid search, then golden-section refinement.
fn extremum(f: &dyn Fn(f64) -> f64, a: f64, maximize: bool) -> f64 {
    const GRID: usize = 4096;
    let score = |y: f64| if maximize { f(y).abs() } else { -f(y).abs() };
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let v = score(a * i as f64 / GRID as f64);
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    let h = a / GRID as f64;
    let (mut lo, mut hi) = ((best as f64 - 1.0).max(0.0) * h, ((best + 1).min(GRID)) as f64 * h);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - r * (hi - lo);
        let m2 = lo + r * (hi - lo);
        if score(m1) > score(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let v = score(0.5 * (lo + hi)).max(best_v);
    if maximize {
        v
    } else {
        -v
    }
}

/// `κ, ω₀, ω₂, ω₃, g₀, g₁` over `[0, a]`.
pub fn bound_constants(omega: &dyn Smooth, g: &dyn Smooth, a: f64) -> BoundConstants {
    let w0 = omega.value(0.0);
    BoundConstants {
        kappa: extremum(&|y| omega.derivative(y, 2), a, false),
        omega0: extremum(&|y| omega.value(y) - w0, a, true),
        omega2: extremum(&|y| omega.derivative(y, 2), a, true),
        omega3: extremum(&|y| omega.derivative(y, 3), a, true),
        g0: extremum(&|y| g.value(y), a, true),
        g1: extremum(&|y| g.derivative(y, 1), a, true),
        a,
    }
}

/// One `N` of a remainder sweep.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryPhaseReport {
    #[serde(rename = "N")]
    pub n_big: f64,
    pub direct: C,
    pub leading: C,
    pub remainder: C,
    pub bound_shape: f64,
    /// `|𝓡(N)| / B(N)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RemainderVerification {
    pub constants: BoundConstants,
    pub rows: Vec<StationaryPhaseReport>,
    /// Largest observed `|𝓡|/B`.
    pub c_hat: f64,
    /// Minus the log-log slope of `|𝓡(N)|`.
    pub decay_exponent: f64,
}

pub fn verify_remainder(omega: &dyn Smooth, g: &dyn Smooth, n_list: &[f64]) -> Result<RemainderVerification> {
    let a = support_of(g)?;
    check_phase(omega, a)?;
    let constants = bound_constants(omega, g, a);
    let rows = n_list
        .par_iter()
        .map(|&nb| {
            let direct = evaluate_j(omega, g, nb)?;
            let leading = leading_term(omega, g, nb, false);
            let remainder = direct - leading;
            let bound_shape = constants.bound_shape(nb);
            Ok(StationaryPhaseReport { n_big: nb, direct, leading, remainder, bound_shape, ratio: remainder.norm() / bound_shape })
        })
        .collect::<Result<Vec<_>>>()?;
    let c_hat = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let decay_exponent = if rows.len() >= 2 {
        let lx: Vec<f64> = rows.iter().map(|r| r.n_big.abs().ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.remainder.norm().ln()).collect();
        -linear_fit(&lx, &ly).0
    } else {
        f64::NAN
    };
    Ok(RemainderVerification { constants, rows, c_hat, decay_exponent })
}

/// Geometric grid of `count` points on `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_and_conjugation() {
        let zero = JetFn { f: |v: Jet<f64>| v.scale(0.0), support: Some(1.0) };
        assert_eq!(evaluate_j(&PolyPhase::quadratic(), &zero, 50.0).unwrap(), C::new(0.0, 0.0));
        let g = Bump { width: 1.0, tilt: 0.7 };
        let p = evaluate_j(&PolyPhase::quadratic(), &g, 300.0).unwrap();
        let m = evaluate_j(&PolyPhase::quadratic(), &g, -300.0).unwrap();
        assert!((p - m.conj()).norm() < 1e-14);
    }

    #[test]
    fn gaussian_amplitude_closed_form() {
        // ∫₀^∞ e^{iNy² − βy²} dy = ½ √(π/(β − iN))
        let g = GaussianAmplitude { beta: 3.0 };
        for nb in [1.0, 40.0, 2500.0] {
            let v = evaluate_j(&PolyPhase::quadratic(), &g, nb).unwrap();
            let exact = (C::new(std::f64::consts::PI, 0.0) / C::new(3.0, -nb)).sqrt() * 0.5;
            assert!((v - exact).norm() < 1e-12, "N = {nb}: {v} vs {exact}");
        }
    }

    #[test]
    fn leading_term_values() {
        let g = Bump { width: 1.0, tilt: 0.0 };
        let l = leading_term(&PolyPhase::quadratic(), &g, 100.0, false);
        let expect = C::from_polar(0.5 * (std::f64::consts::PI / 100.0).sqrt(), std::f64::consts::FRAC_PI_4);
        assert!((l - expect).norm() < 1e-15);
        let l4 = leading_term(&PolyPhase::quadratic(), &g, 400.0, false);
        assert!((l.norm() / l4.norm() - 2.0).abs() < 1e-14);
        let shifted = Shifted { inner: &g, y0: 1.0, sign: 1.0, support: Some(0.5) };
        assert_eq!(leading_term(&PolyPhase::quadratic(), &shifted, 10.0, false), C::new(0.0, 0.0));
    }

    #[test]
    fn constants_of_quadratic() {
        let c = bound_constants(&PolyPhase::quadratic(), &Bump { width: 1.0, tilt: 0.0 }, 1.0);
        assert!((c.kappa - 2.0).abs() < 1e-14 && (c.omega2 - 2.0).abs() < 1e-14);
        assert_eq!(c.omega3, 0.0);
        assert!((c.g0 - 1.0).abs() < 1e-12);
        assert!((c.omega0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_phase_rejected() {
        let g = Bump { width: 1.0, tilt: 0.0 };
        assert!(matches!(evaluate_j(&PolyPhase(vec![0.0, 0.0, 0.0, 1.0]), &g, 10.0), Err(Error::Precondition(_))));
        assert!(matches!(evaluate_j(&PolyPhase(vec![0.0, 1.0, 1.0]), &g, 10.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn full_line_doubles_leading_term() {
        let g = GaussianAmplitude { beta: 2.0 };
        let w = PolyPhase(vec![0.3, 0.0, 1.5]);
        let nb = 1e4;
        let v = evaluate_j_full(&w, &g, 0.0, g.support().unwrap(), nb).unwrap();
        let l = leading_term(&w, &g, nb, true);
        assert!((v - l).norm() < 1e-3 * l.norm());
    }

    #[test]
    fn plateau_is_flat_near_origin() {
        let p = Plateau { width: 1.0 };
        assert_eq!(p.value(0.2), 1.0);
        assert_eq!(p.value(1.0), 0.0);
        let mid = p.value(0.75);
        assert!((mid - 0.5).abs() < 1e-14);
        let h = 1e-6;
        let fd = (p.value(0.8 + h) - p.value(0.8 - h)) / (2.0 * h);
        assert!((fd - p.derivative(0.8, 1)).abs() < 1e-6);
    }
}
