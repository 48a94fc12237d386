//! Complex gamma function, Taylor coefficients of `1/Γ(1-z)` and the
//! Mellin-side phase `η`.
//!
//! Two independent evaluations of `log Γ` live here: a Lanczos sum (used by
//! [`complex_gamma`]) and a shifted Stirling series (used by [`ln_gamma`] and
//! [`eta_phase`]). Tests compare them against each other.

use num_complex::Complex;

use crate::{Error, Real, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Bernoulli numbers B_2, B_4, ..., B_16.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_6;

#[inline]
fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).unwrap()
}

/// Euler–Mascheroni constant in the requested precision.
pub fn euler_gamma<T: Real>() -> T {
    c(EULER_GAMMA)
}

fn is_pole<T: Real>(z: Complex<T>) -> bool {
    z.im == T::zero() && z.re <= T::zero() && z.re == z.re.round()
}

/// `sin(πz)` with exact reduction of the real part modulo 2.
fn sin_pi<T: Real>(z: Complex<T>) -> Complex<T> {
    let two = c::<T>(2.0);
    let xr = z.re - two * (z.re / two).round();
    let pi = T::PI();
    Complex::new(
        (pi * xr).sin() * (pi * z.im).cosh(),
        (pi * xr).cos() * (pi * z.im).sinh(),
    )
}

/// `log Γ(z)` by the Lanczos sum, valid for `Re z ≥ 1/2`.
fn ln_gamma_lanczos<T: Real>(z: Complex<T>) -> Complex<T> {
    let one = T::one();
    let z = z - one;
    let mut x = Complex::new(c::<T>(LANCZOS_COEFFS[0]), T::zero());
    for (i, &p) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        x = x + Complex::new(c::<T>(p), T::zero()) / (z + c::<T>(i as f64));
    }
    let t = z + c::<T>(LANCZOS_G + 0.5);
    let half_ln_2pi = c::<T>(0.5) * (c::<T>(2.0) * T::PI()).ln();
    (z + c::<T>(0.5)) * t.ln() - t + x.ln() + half_ln_2pi
}

/// Γ(z) for complex `z`; reflection is applied for `Re z < 1/2`.
pub fn complex_gamma<T: Real>(z: Complex<T>) -> Result<Complex<T>> {
    if is_pole(z) {
        return Err(Error::Domain(format!(
            "gamma has a pole at z = {:?}",
            z.re.to_f64().unwrap_or(f64::NAN)
        )));
    }
    let half = c::<T>(0.5);
    if z.re < half {
        let one = Complex::new(T::one(), T::zero());
        let g = ln_gamma_lanczos(one - z).exp();
        Ok(Complex::new(T::PI(), T::zero()) / (sin_pi(z) * g))
    } else {
        Ok(ln_gamma_lanczos(z).exp())
    }
}

/// Principal `log Γ(z)` for `Re z > 0`, continuous in the right half-plane
/// and real on the positive axis. Uses upward recurrence and Stirling.
pub fn ln_gamma<T: Real>(z: Complex<T>) -> Result<Complex<T>> {
    if z.re <= T::zero() {
        return Err(Error::Domain("ln_gamma requires Re z > 0".into()));
    }
    let threshold = c::<T>(15.0);
    let mut shift = Complex::new(T::zero(), T::zero());
    let mut w = z;
    while w.norm() < threshold {
        shift = shift + w.ln();
        w = w + T::one();
    }
    let half_ln_2pi = c::<T>(0.5) * (c::<T>(2.0) * T::PI()).ln();
    let mut s = (w - c::<T>(0.5)) * w.ln() - w + half_ln_2pi;
    let w2 = w * w;
    let mut wp = w;
    for (k, &b) in BERNOULLI_EVEN.iter().enumerate() {
        let k2 = (2 * (k + 1)) as f64;
        s = s + Complex::new(c::<T>(b / (k2 * (k2 - 1.0))), T::zero()) / wp;
        wp = wp * w2;
    }
    Ok(s - shift)
}

/// `η(ξ) = −Im log Γ(1/2 − iξ)` on the continuous branch through `η(0) = 0`.
pub fn eta_phase<T: Real>(xi: T) -> T {
    let z = Complex::new(c::<T>(0.5), -xi);
    -ln_gamma(z).expect("Re z = 1/2").im
}

/// `η` on a monotone grid, obtained by unwrapping `arg Γ(1/2 − iξ)` from the
/// Lanczos route while sweeping outward from `ξ = 0`.
pub fn eta_phase_sweep<T: Real>(grid: &[T]) -> Vec<T> {
    let two_pi = c::<T>(2.0) * T::PI();
    let raw = |xi: T| -> T {
        let g = complex_gamma(Complex::new(c::<T>(0.5), -xi)).expect("not a pole");
        -g.im.atan2(g.re)
    };
    let sweep_to = |target: T, step: T| -> T {
        let mut xi = T::zero();
        let mut acc = T::zero();
        let mut prev = T::zero();
        loop {
            let next = if (target - xi).abs() <= step {
                target
            } else {
                xi + step * target.signum()
            };
            let r = raw(next);
            let mut d = r - prev;
            d = d - two_pi * (d / two_pi).round();
            acc = acc + d;
            prev = r;
            xi = next;
            if xi == target {
                return acc;
            }
        }
    };
    let step = c::<T>(0.25);
    let mut out = Vec::with_capacity(grid.len());
    let mut last: Option<(T, T)> = None;
    for &xi in grid {
        let val = match last {
            Some((x0, e0)) if (xi - x0).abs() <= step && xi.signum() == x0.signum() => {
                let mut d = raw(xi) - raw(x0);
                d = d - two_pi * (d / two_pi).round();
                e0 + d
            }
            _ => sweep_to(xi, step),
        };
        out.push(val);
        last = Some((xi, val));
    }
    out
}

/// Riemann zeta at an integer `k ≥ 2`, via Euler–Maclaurin after 20 terms.
pub fn zeta_int<T: Real>(k: u32) -> T {
    assert!(k >= 2, "zeta_int requires k >= 2");
    let n = 20usize;
    let kf = k as f64;
    let mut s = T::zero();
    for j in 1..n {
        s = s + c::<T>(j as f64).powf(c::<T>(-kf));
    }
    let nf = n as f64;
    let mut tail = nf.powf(1.0 - kf) / (kf - 1.0) + 0.5 * nf.powf(-kf);
    // sum_j B_2j/(2j)! * k(k+1)...(k+2j-2) * N^{-k-2j+1}
    let mut rising = kf;
    let mut fact = 2.0;
    for (j, &b) in BERNOULLI_EVEN.iter().enumerate() {
        let jj = (j + 1) as f64;
        tail += b / fact * rising * nf.powf(-kf - 2.0 * jj + 1.0);
        rising *= (kf + 2.0 * jj - 1.0) * (kf + 2.0 * jj);
        fact *= (2.0 * jj + 1.0) * (2.0 * jj + 2.0);
    }
    s + c::<T>(tail)
}

/// Taylor coefficients of `γ(z) = 1/Γ(1−z)` at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipGammaSeries<T> {
    pub order: usize,
    /// `coeffs[j] = γ^{(j)}(0) / j!`
    pub coeffs: Vec<T>,
}

impl<T: Real> RecipGammaSeries<T> {
    pub fn eval(&self, z: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &a| acc * z + a)
    }

    /// `γ^{(j)}(0)`, the derivative rather than the Taylor coefficient.
    pub fn derivative(&self, j: usize) -> T {
        let mut f = T::one();
        for i in 2..=j {
            f = f * c::<T>(i as f64);
        }
        self.coeffs[j] * f
    }
}

/// Coefficients of `1/Γ(1−z) = exp(−γ_E z − Σ_{k≥2} ζ(k) z^k / k)`.
pub fn recip_gamma_taylor<T: Real>(order: usize) -> Result<RecipGammaSeries<T>> {
    if order > 30 {
        return Err(Error::Config(format!("order {order} exceeds 30")));
    }
    let mut l = vec![T::zero(); order + 1];
    if order >= 1 {
        l[1] = -euler_gamma::<T>();
    }
    for (k, lk) in l.iter_mut().enumerate().skip(2) {
        *lk = -zeta_int::<T>(k as u32) / c::<T>(k as f64);
    }
    let mut e = vec![T::zero(); order + 1];
    e[0] = T::one();
    for m in 1..=order {
        let mut acc = T::zero();
        for k in 1..=m {
            acc = acc + c::<T>(k as f64) * l[k] * e[m - k];
        }
        e[m] = acc / c::<T>(m as f64);
    }
    Ok(RecipGammaSeries { order, coeffs: e })
}

/// Same coefficients by trapezoidal Cauchy integrals of the Lanczos gamma on
/// the circle |z| = 3/2. Spectrally accurate; used as a cross-check.
pub fn recip_gamma_contour(order: usize) -> Vec<f64> {
    let m = 128usize;
    let mut out = vec![0.0; order + 1];
    for k in 0..m {
        let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
        let r = 1.5;
        let z = Complex::new(r * th.cos(), r * th.sin());
        let g = complex_gamma(Complex::new(1.0, 0.0) - z).expect("entire");
        let f = Complex::new(1.0, 0.0) / g;
        for (j, o) in out.iter_mut().enumerate() {
            *o += (f * Complex::new(0.0, -(j as f64) * th).exp()).re / m as f64 / r.powi(j as i32);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gamma_trivial_values() {
        let g1 = complex_gamma(Complex::new(1.0f64, 0.0)).unwrap();
        assert!((g1.re - 1.0).abs() < 1e-14 && g1.im.abs() < 1e-14);
        let gh = complex_gamma(Complex::new(0.5, 0.0)).unwrap();
        assert!((gh.re - PI.sqrt()).abs() < 1e-14);
        let g = complex_gamma(Complex::new(0.5, -1.0)).unwrap();
        assert!((g.norm_sqr() - PI / PI.cosh()).abs() < 1e-13);
    }

    #[test]
    fn gamma_pole_is_domain_error() {
        assert!(matches!(complex_gamma(Complex::new(-3.0, 0.0)), Err(Error::Domain(_))));
        assert!(complex_gamma(Complex::new(-3.0, 1e-9)).is_ok());
    }

    #[test]
    fn gamma_integer_factorials() {
        let mut f = 1.0;
        for n in 1..15 {
            let g = complex_gamma(Complex::new(n as f64, 0.0)).unwrap();
            assert!((g.re / f - 1.0).abs() < 1e-13, "n={n}");
            f *= n as f64;
        }
    }

    #[test]
    fn lanczos_and_stirling_agree_on_strip() {
        for &re in &[0.5, 1.3, 4.0, 9.7] {
            for &im in &[-100.0, -37.0, -3.0, 0.2, 11.0, 99.0] {
                let z = Complex::new(re, im);
                let a = complex_gamma(z).unwrap();
                let b = ln_gamma(z).unwrap().exp();
                assert!(((a - b) / b).norm() < 1e-12, "z={z}");
            }
        }
    }

    #[test]
    fn reflection_branch_matches_recurrence() {
        // Γ(z) = Γ(z+m) / (z(z+1)...(z+m-1))
        for &re in &[-9.6, -4.2, -0.7, 0.3] {
            for &im in &[-60.0, -1.0, 0.4, 80.0] {
                let z = Complex::new(re, im);
                let m = 12;
                let mut den = Complex::new(1.0, 0.0);
                for k in 0..m {
                    den *= z + k as f64;
                }
                let expected = ln_gamma(z + m as f64).unwrap().exp() / den;
                let got = complex_gamma(z).unwrap();
                assert!(((got - expected) / expected).norm() < 1e-12, "z={z}");
            }
        }
    }

    #[test]
    fn zeta_known_values() {
        assert!((zeta_int::<f64>(2) - PI * PI / 6.0).abs() < 1e-15);
        assert!((zeta_int::<f64>(4) - PI.powi(4) / 90.0).abs() < 1e-15);
        assert!((zeta_int::<f64>(30) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn series_matches_contour() {
        let s = recip_gamma_taylor::<f64>(30).unwrap();
        let cont = recip_gamma_contour(30);
        for j in 0..=30 {
            assert!((s.coeffs[j] - cont[j]).abs() < 1e-13, "j={j}");
        }
        assert_eq!(s.coeffs[0], 1.0);
    }

    #[test]
    fn series_order_limit() {
        assert!(recip_gamma_taylor::<f64>(31).is_err());
        assert_eq!(recip_gamma_taylor::<f64>(0).unwrap().coeffs, vec![1.0]);
    }

    #[test]
    fn series_reproduces_function() {
        let s = recip_gamma_taylor::<f64>(12).unwrap();
        for i in 0..=40 {
            let z = -0.4 + 0.02 * i as f64;
            let exact = 1.0 / complex_gamma(Complex::new(1.0 - z, 0.0)).unwrap().re;
            assert!((s.eval(z) - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn eta_basic() {
        assert_eq!(eta_phase(0.0f64), 0.0);
        for &x in &[0.5f64, 2.0, 10.0] {
            assert!((eta_phase(x) + eta_phase(-x)).abs() < 1e-13);
        }
        assert!((eta_phase(50.0f64) - (50.0 * 50f64.ln() - 50.0)).abs() < 1e-2);
    }

    #[test]
    fn eta_sweep_matches_direct() {
        let grid: Vec<f64> = (0..=400).map(|i| -20.0 + 0.1 * i as f64).collect();
        let sw = eta_phase_sweep(&grid);
        for (x, e) in grid.iter().zip(&sw) {
            assert!((e - eta_phase(*x)).abs() < 1e-10, "xi={x}");
        }
    }

    #[test]
    fn f32_instantiation() {
        let g = complex_gamma(Complex::new(0.5f32, 0.0)).unwrap();
        assert!((g.re - std::f32::consts::PI.sqrt()).abs() < 1e-5);
        let s = recip_gamma_taylor::<f32>(4).unwrap();
        assert!((s.coeffs[1] + 0.577_215_7).abs() < 1e-6);
    }
}
