//! Quadrature rules: Gauss–Legendre (fixed and adaptive) and adaptive Simpson.

use std::sync::OnceLock;

use crate::Real;

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Cached 20-point rule.
pub fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(20))
}

/// Cached 10-point rule.
pub fn gl10() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(10))
}

/// Fixed rule on [a, b].
pub fn gl_fixed<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, rule: &(Vec<f64>, Vec<f64>)) -> T {
    let half = T::from_f64(0.5).unwrap();
    let mid = (a + b) * half;
    let hw = (b - a) * half;
    let mut s = T::zero();
    for (x, w) in rule.0.iter().zip(&rule.1) {
        s = s + T::from_f64(*w).unwrap() * f(mid + hw * T::from_f64(*x).unwrap());
    }
    s * hw
}

/// Composite Gauss–Legendre with `panels` equal panels and an `order`-point rule.
pub fn gl_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + p as f64 * h;
            gl_fixed(&f, lo, lo + h, &rule)
        })
        .sum()
}

/// Adaptive Gauss–Legendre: bisect until the 10- and 20-point rules agree.
pub fn adaptive_gl<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    fn rec<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T, depth: u32) -> T {
        let hi = gl_fixed(f, a, b, gl20());
        let lo = gl_fixed(f, a, b, gl10());
        if (hi - lo).abs() <= tol || depth > 40 {
            return hi;
        }
        let m = (a + b) * T::from_f64(0.5).unwrap();
        let t2 = tol * T::from_f64(0.5).unwrap();
        rec(f, a, m, t2, depth + 1) + rec(f, m, b, t2, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth > 50 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, tol, 0)
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
