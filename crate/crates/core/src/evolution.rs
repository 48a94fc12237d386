//! Large-time profiles of `e^{−iHT}u`.
//!
//! Everything is parametrized by `N = ln t`. The stationary points `y(t,T)`
//! solve `ξ'(nTy) N = |y|^{1/(n−1)} sgn y`; for odd `n` the second branch
//! `y₁` solves `ξ'(nTy) N = −y^{1/(n−1)}`, `y > 0`. Since `ξ'` is even, both
//! reduce to the scalar equation `ξ'(n|T|u)|N| = u^{1/(n−1)}` for `u = |y|`.

use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hankelphase::HankelGeometry;
use crate::quad::{gl20, gl_fixed, linear_fit};

const PI: f64 = std::f64::consts::PI;

/// A root of the stationary-point equation with its residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryRoot {
    pub y: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Stationary points at one `(N, T)`. `None` marks a branch with no solution:
/// for odd `n`, `y₁` is absent for `t > 1` and `y₂` for `t < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryPoints {
    /// Root of `ξ'(nTy)N = |y|^{1/(n−1)} sgn y` (for odd n restricted to `y > 0`).
    pub y: Option<StationaryRoot>,
    /// Odd `n` only: root of `ξ'(nTy)N = −y^{1/(n−1)}`, `y > 0`.
    pub y1: Option<StationaryRoot>,
}

fn check_args(geo: &HankelGeometry, ln_t: f64, t_big: f64) -> Result<()> {
    if geo.n() < 2 {
        return Err(Error::Config("evolution profiles need n >= 2".into()));
    }
    if ln_t == 0.0 || t_big == 0.0 || !ln_t.is_finite() || !t_big.is_finite() {
        return Err(Error::SingularArgument(format!("need ln t != 0 and T != 0 (ln t = {ln_t}, T = {t_big})")));
    }
    Ok(())
}

/// `|y|` from `ξ'(n|T|u)|N| = u^{1/(n−1)}`, seeded by `|N/(πT)|^{(n−1)/n}`;
/// bracketing by doubling, then secant steps safeguarded by bisection.
fn modulus_root(geo: &HankelGeometry, ln_t: f64, t_big: f64) -> Result<StationaryRoot> {
    let n = geo.n() as f64;
    let scale = n * t_big.abs();
    let na = ln_t.abs();
    let f = |u: f64| -> Result<f64> { Ok(geo.xi_prime(scale * u)? * na - u.powf(1.0 / (n - 1.0))) };
    let seed = (na / (PI * t_big.abs())).powf((n - 1.0) / n);
    let (mut lo, mut hi) = (0.5 * seed, 2.0 * seed);
    let (mut flo, mut fhi) = (f(lo)?, f(hi)?);
    let mut guard = 0;
    while flo < 0.0 {
        hi = lo;
        fhi = flo;
        lo *= 0.5;
        flo = f(lo)?;
        guard += 1;
        if guard > 200 {
            return Err(Error::Convergence("no bracket for the stationary point".into()));
        }
    }
    while fhi > 0.0 {
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        fhi = f(hi)?;
        guard += 1;
        if guard > 200 {
            return Err(Error::Convergence("no bracket for the stationary point".into()));
        }
    }
    let mut u = seed.clamp(lo, hi);
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it + 1;
        let mut next = lo - flo * (hi - lo) / (fhi - flo);
        if !(next > lo && next < hi) || it % 3 == 2 {
            next = 0.5 * (lo + hi);
        }
        let fv = f(next)?;
        u = next;
        if fv == 0.0 {
            break;
        }
        if fv > 0.0 {
            lo = next;
            flo = fv;
        } else {
            hi = next;
            fhi = fv;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(StationaryRoot { y: u, residual: f(u)?.abs(), iterations })
}

/// Stationary points for `ln t` and `T`.
pub fn stationary_point_y(ln_t: f64, t_big: f64, geo: &HankelGeometry) -> Result<StationaryPoints> {
    check_args(geo, ln_t, t_big)?;
    let root = modulus_root(geo, ln_t, t_big)?;
    if geo.n() % 2 == 0 {
        let signed = StationaryRoot { y: ln_t.signum() * root.y, ..root };
        return Ok(StationaryPoints { y: Some(signed), y1: None });
    }
    Ok(if ln_t > 0.0 { StationaryPoints { y: Some(root), y1: None } } else { StationaryPoints { y: None, y1: Some(root) } })
}

/// `Φ = −ξ(nTy)N ± (n−1)|y|^{n/(n−1)}T + ϱ(nTy)` split into its three terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvolutionPhase {
    pub xi_term: f64,
    pub power_term: f64,
    pub varrho_term: f64,
}

impl EvolutionPhase {
    pub fn value(&self) -> f64 {
        self.xi_term + self.power_term + self.varrho_term
    }
}

fn phase_terms(ln_t: f64, t_big: f64, y: f64, sign: f64, geo: &HankelGeometry) -> Result<EvolutionPhase> {
    let n = geo.n() as f64;
    let x = n * t_big * y;
    Ok(EvolutionPhase {
        xi_term: -geo.xi(x)? * ln_t,
        power_term: sign * (n - 1.0) * y.abs().powf(n / (n - 1.0)) * t_big,
        varrho_term: geo.varrho(x)?,
    })
}

/// `Φ(t,T)` at a given `y` (normally `y(t,T)`).
pub fn evolution_phase(ln_t: f64, t_big: f64, y: f64, geo: &HankelGeometry) -> Result<EvolutionPhase> {
    check_args(geo, ln_t, t_big)?;
    phase_terms(ln_t, t_big, y, 1.0, geo)
}

/// `Φ₁(t,T)` of the odd-n branch at `y = y₁(t,T)`.
pub fn evolution_phase_first(ln_t: f64, t_big: f64, y1: f64, geo: &HankelGeometry) -> Result<EvolutionPhase> {
    check_args(geo, ln_t, t_big)?;
    if geo.n() % 2 == 0 {
        return Err(Error::Config("the first branch exists for odd n only".into()));
    }
    phase_terms(ln_t, t_big, y1, -1.0, geo)
}

/// `ω(y) = −ξ(nTy)T⁻¹N + (n−1)|y|^{n/(n−1)}`.
pub fn omega_y(y: f64, ln_t: f64, t_big: f64, geo: &HankelGeometry) -> Result<f64> {
    let n = geo.n() as f64;
    Ok(-geo.xi(n * t_big * y)? * ln_t / t_big + (n - 1.0) * y.abs().powf(n / (n - 1.0)))
}

/// `∂²ω/∂y²` by a five-point central difference with step `h`.
pub fn omega_yy_numeric(y: f64, ln_t: f64, t_big: f64, h: f64, geo: &HankelGeometry) -> Result<f64> {
    let w = |s: f64| omega_y(y + s * h, ln_t, t_big, geo);
    Ok((-w(2.0)? + 16.0 * w(1.0)? - 30.0 * w(0.0)? + 16.0 * w(-1.0)? - w(-2.0)?) / (12.0 * h * h))
}

/// Leading value `n²(n−1)⁻¹|N/(πT)|^{−(n−2)/n}` of `ω''` at the stationary point.
pub fn omega_yy_predicted(n: usize, ln_t: f64, t_big: f64) -> f64 {
    let nf = n as f64;
    nf * nf / (nf - 1.0) * (ln_t / (PI * t_big)).abs().powf(-(nf - 2.0) / nf)
}

/// `Ξ₀(x,T) = (n−1)|x/(nT)|^{n/(n−1)}T`.
pub fn xi0_phase(x: f64, t_big: f64, n: usize) -> f64 {
    let nf = n as f64;
    (nf - 1.0) * (x / (nf * t_big)).abs().powf(nf / (nf - 1.0)) * t_big
}

/// `(Yf)(x) = (n−1)^{−1/2}|x|^{−(n−2)/(2(n−1))} f̂(sgn x |x|^{1/(n−1)})`,
/// with `f̂` supplied by the caller.
pub fn y_map(f_hat: &dyn Fn(f64) -> C, n: usize, x: f64) -> C {
    let nf = n as f64;
    if x == 0.0 {
        return if n == 2 { f_hat(0.0) } else { C::new(f64::INFINITY, 0.0) };
    }
    let ax = x.abs();
    f_hat(x.signum() * ax.powf(1.0 / (nf - 1.0))) * ((nf - 1.0).powf(-0.5) * ax.powf(-(nf - 2.0) / (2.0 * (nf - 1.0))))
}

/// `‖Yf‖²` by quadrature in `x` on geometric panels towards `0` and unit
/// panels out to `x_max`, on both half-lines, with 20-point Gauss rules.
pub fn y_map_norm_sqr(f_hat: &(dyn Fn(f64) -> C + Sync), n: usize, x_max: f64) -> f64 {
    let mut panels = Vec::new();
    let mut a: f64 = 1e-40;
    while a < 1.0 {
        let b = (2.0 * a).min(1.0);
        panels.push((a, b));
        a = b;
    }
    let mut a = 1.0;
    while a < x_max {
        panels.push((a, (a + 1.0).min(x_max)));
        a += 1.0;
    }
    panels
        .par_iter()
        .map(|&(a, b)| {
            let g = |x: f64| y_map(f_hat, n, x).norm_sqr() + y_map(f_hat, n, -x).norm_sqr();
            gl_fixed(&g, a, b, gl20())
        })
        .sum()
}

/// Predicted `√t·(e^{−iHT}u)(t)` at one `N`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfilePoint {
    #[serde(rename = "N")]
    pub n_big: f64,
    pub value: C,
    /// Odd n: the `j = 1` and `j = 2` terms; zero for even n.
    pub branches: [C; 2],
    pub y: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionProfile {
    pub n: usize,
    #[serde(rename = "T")]
    pub t_big: f64,
    pub points: Vec<ProfilePoint>,
}

impl EvolutionProfile {
    /// `∫|√t·(e^{−iHT}u)|² dN` by the trapezoid rule on the (sorted) grid.
    pub fn mass(&self) -> f64 {
        self.points.windows(2).map(|w| 0.5 * (w[1].n_big - w[0].n_big) * (w[0].value.norm_sqr() + w[1].value.norm_sqr())).sum()
    }

    /// Mass with `|N| ≥ c|T|`.
    pub fn mass_beyond(&self, c: f64) -> f64 {
        let cut = c * self.t_big.abs();
        self.points
            .windows(2)
            .filter(|w| w[0].n_big.abs() >= cut && w[1].n_big.abs() >= cut && w[0].n_big.signum() == w[1].n_big.signum())
            .map(|w| 0.5 * (w[1].n_big - w[0].n_big) * (w[0].value.norm_sqr() + w[1].value.norm_sqr()))
            .sum()
    }

    /// Largest `|j = 1 term|` over `t > 1` (odd n).
    pub fn first_branch_max_on_large_t(&self) -> f64 {
        self.points.iter().filter(|p| p.n_big > 0.0).map(|p| p.branches[0].norm()).fold(0.0, f64::max)
    }
}

fn prefactor(nf: f64, ln_t: f64, t_big: f64) -> (f64, f64) {
    let r = (ln_t / (PI * t_big)).abs();
    let amp = ((nf - 1.0) / (PI * nf * t_big.abs())).sqrt() * r.powf(-1.0 / (2.0 * nf));
    (amp, r.powf((nf - 1.0) / nf))
}

/// Odd-n term `χ_j(t) e^{iΦ_j} √((n−1)/(πn|T|)) |N/(πT)|^{−1/(2n)} f((−1)^j |N/(πT)|^{(n−1)/n})`,
/// `j ∈ {1, 2}`; zero outside the interval of `χ_j`.
pub fn odd_branch_term(j: u8, f: &dyn Fn(f64) -> C, ln_t: f64, t_big: f64, geo: &HankelGeometry) -> Result<C> {
    if geo.n() % 2 == 0 || !(j == 1 || j == 2) {
        return Err(Error::Config("odd_branch_term needs odd n and j in {1, 2}".into()));
    }
    let sp = stationary_point_y(ln_t, t_big, geo)?;
    let (amp, arg) = prefactor(geo.n() as f64, ln_t, t_big);
    Ok(match (j, sp.y1, sp.y) {
        (1, Some(root), _) => C::from_polar(amp, evolution_phase_first(ln_t, t_big, root.y, geo)?.value()) * f(-arg),
        (2, _, Some(root)) => C::from_polar(amp, evolution_phase(ln_t, t_big, root.y, geo)?.value()) * f(arg),
        _ => C::new(0.0, 0.0),
    })
}

/// Leading profile `e^{iΦ}√((n−1)/(πn|T|))|N/(πT)|^{−1/(2n)} f(sgn N |N/(πT)|^{(n−1)/n})`
/// on a grid of `N = ln t`; for odd `n` the sum of both `odd_branch_term`s.
pub fn evolution_profile(f: &(dyn Fn(f64) -> C + Sync), n_grid: &[f64], t_big: f64, geo: &HankelGeometry) -> Result<EvolutionProfile> {
    let n = geo.n();
    let points = n_grid
        .par_iter()
        .map(|&nb| -> Result<ProfilePoint> {
            if n % 2 == 1 {
                let branches = [odd_branch_term(1, f, nb, t_big, geo)?, odd_branch_term(2, f, nb, t_big, geo)?];
                let sp = stationary_point_y(nb, t_big, geo)?;
                let y = sp.y.or(sp.y1).unwrap().y;
                return Ok(ProfilePoint { n_big: nb, value: branches[0] + branches[1], branches, y });
            }
            let y = stationary_point_y(nb, t_big, geo)?.y.unwrap().y;
            let (amp, arg) = prefactor(n as f64, nb, t_big);
            let value = C::from_polar(amp, evolution_phase(nb, t_big, y, geo)?.value()) * f(nb.signum() * arg);
            Ok(ProfilePoint { n_big: nb, value, branches: [C::new(0.0, 0.0); 2], y })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolutionProfile { n, t_big, points })
}

/// Decay of `|y·|πT/N|^{(n−1)/n} − 1|` in `T` at a fixed ratio `N/T`.
#[derive(Debug, Clone, Serialize)]
pub struct CorrectionDecay {
    pub ratio: f64,
    #[serde(rename = "T")]
    pub t_grid: Vec<f64>,
    pub corrections: Vec<f64>,
    /// Fitted `p` in `correction ~ T^{−p}`.
    pub exponent: f64,
}

pub fn correction_decay(ratio: f64, t_grid: &[f64], geo: &HankelGeometry) -> Result<CorrectionDecay> {
    let nf = geo.n() as f64;
    let corrections = t_grid
        .iter()
        .map(|&tb| {
            let nb = ratio * tb;
            let sp = stationary_point_y(nb, tb, geo)?;
            let y = sp.y.or(sp.y1).unwrap().y.abs();
            Ok((y * (PI * tb / nb).abs().powf((nf - 1.0) / nf) - 1.0).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let lx: Vec<f64> = t_grid.iter().map(|t| t.abs().ln()).collect();
    let ly: Vec<f64> = corrections.iter().map(|c| c.ln()).collect();
    Ok(CorrectionDecay { ratio, t_grid: t_grid.to_vec(), corrections, exponent: -linear_fit(&lx, &ly).0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffmap::{p_to_q, RealPolynomial};
    use crate::liouville::OperatorCoefficients;
    use crate::profile::WeightProfile;

    fn op(p: &[f64]) -> OperatorCoefficients {
        let q = p_to_q(&RealPolynomial::new(p.to_vec()));
        OperatorCoefficients::new(q, WeightProfile::cosh(p.len() - 1)).unwrap()
    }

    #[test]
    fn stationary_point_n2() {
        let o = op(&[0.0, 0.0, 1.0]);
        let g = HankelGeometry::from_operator(&o).unwrap();
        let t = 1e3;
        let sp = stationary_point_y(PI * t, t, &g).unwrap();
        let y = sp.y.unwrap();
        assert!(y.residual < 1e-10);
        assert!((y.y - 1.0).abs() < 5.0 / t, "y = {}", y.y);
        let neg = stationary_point_y(-PI * t, t, &g).unwrap().y.unwrap();
        assert!(neg.y < 0.0 && (neg.y + y.y).abs() < 1e-12);
        assert!(sp.y1.is_none());
    }

    #[test]
    fn odd_branches() {
        let o = op(&[0.0, 0.0, 0.0, 1.0]);
        let g = HankelGeometry::from_operator(&o).unwrap();
        let up = stationary_point_y(500.0, 300.0, &g).unwrap();
        assert!(up.y1.is_none() && up.y.unwrap().y > 0.0);
        let down = stationary_point_y(-500.0, 300.0, &g).unwrap();
        assert!(down.y.is_none() && down.y1.unwrap().y > 0.0);
        assert!(down.y1.unwrap().residual < 1e-10);
    }

    #[test]
    fn phase_structure() {
        let o = op(&[0.2, 0.0, 1.0]);
        let g = HankelGeometry::from_operator(&o).unwrap();
        let (nb, tb) = (2500.0, 1000.0);
        let y = stationary_point_y(nb, tb, &g).unwrap().y.unwrap().y;
        let p = evolution_phase(nb, tb, y, &g).unwrap();
        let x = 2.0 * tb * y;
        assert_eq!(p.value() - p.varrho_term, -g.xi(x).unwrap() * nb + y.abs().powf(2.0) * tb);
        let q = evolution_phase(-nb, tb, -y, &g).unwrap();
        assert!((q.xi_term - p.xi_term).abs() < 1e-9 * p.xi_term.abs());
        assert_eq!(q.power_term, p.power_term);
        assert_eq!(q.varrho_term, -p.varrho_term);
    }

    #[test]
    fn y_map_is_isometric() {
        let f_hat = |k: f64| C::from_polar((-k * k).exp(), 0.3 * k);
        let exact = (PI / 2.0).sqrt();
        for n in [2, 3, 4] {
            let v = y_map_norm_sqr(&f_hat, n, 60.0_f64.powi(n as i32 - 1).min(4000.0));
            assert!((v - exact).abs() < 1e-8 * exact, "n = {n}: {v}");
        }
    }

    #[test]
    fn profile_mass_and_branches() {
        let f = |y: f64| C::from_polar((-(y - 0.8).powi(2) / 0.05).exp(), 2.0 * y);
        let norm = (PI * 0.025).sqrt();
        let tb = 1e3;
        let grid: Vec<f64> = (1..=10000).map(|i| i as f64 * 2.0).flat_map(|v| [-v, v]).collect();
        let mut grid = grid;
        grid.sort_by(f64::total_cmp);
        for p in [vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]] {
            let g_op = op(&p);
            let g = HankelGeometry::from_operator(&g_op).unwrap();
            let pr = evolution_profile(&f, &grid, tb, &g).unwrap();
            assert!((pr.mass() / norm - 1.0).abs() < 1e-2, "mass {}", pr.mass());
            assert!(pr.mass_beyond(0.5) > 0.99 * pr.mass());
            if p.len() == 4 {
                assert_eq!(pr.first_branch_max_on_large_t(), 0.0);
                assert!(odd_branch_term(1, &f, 2000.0, tb, &g).unwrap() == C::new(0.0, 0.0));
                assert!(odd_branch_term(2, &f, -2000.0, tb, &g).unwrap() == C::new(0.0, 0.0));
                assert!(odd_branch_term(2, &f, 2000.0, tb, &g).unwrap().norm() > 0.0);
            }
        }
    }

    #[test]
    fn xi0_values() {
        assert_eq!(xi0_phase(4.0, 1.0, 2), 4.0);
        assert!((xi0_phase(-30.0, 10.0, 3) - 2.0 * 10.0).abs() < 1e-12);
    }
}
