//! Hankel-side objects: the kernel `h(t) = P(ln t)/t`, the Mellin-side map
//! `F`, the phases `ϱ`, `γ₀`, `γ₁`, `γ`, `ω`, and the eigenfunctions
//! `θ(t,k) = (2π)^{−1/2} t^{−1/2} 𝓘(ln t, k)` with
//! `𝓘(N,k) = ∫ e^{−iξ(x)N} ζ(x) ψ̃(x,k) dx`.
//!
//! Values are reported as `Θ(N) = √t θ(t,k)` with `N = ln t`, so `t` itself
//! is never formed.
//!
//! The integral for `𝓘` converges only conditionally. It is split into a core
//! `|x| ≤ X_core`, where the Nyström solution `ψ̃` is integrated directly, and
//! two tails carrying only the oscillating part `e^{ikx}r₊ + e^{−ikx}r₋`.
//! The tails are integrated on panels up to the mesh radius and closed
//! beyond it by two integrations by parts with the limiting amplitudes.

use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeffmap::{p_to_q, RealPolynomial};
use crate::error::{Error, Result};
use crate::liouville::OperatorCoefficients;
use crate::profile::{a1_constant, ChangeOfVariables};
use crate::quad::gauss_legendre;
use crate::scattering::{interpolate_on, r_functions, EigenfunctionField, LsProblem, Mesh, RFunctions};
use crate::specfun::eta_phase;
use crate::statphase::{leading_term, JetFn};
use crate::taylor::Jet;

const PI: f64 = std::f64::consts::PI;
const I: C = C::new(0.0, 1.0);

/// `h(t) = P(ln t)/t`.
pub fn hankel_kernel(t: f64, p: &RealPolynomial<f64>) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("the kernel needs t > 0, got {t}")));
    }
    Ok(p.eval(t.ln()) / t)
}

/// The phase functions `γ₀`, `γ₁`, `γ(N,k)` and `ω(t,k) = γ(ln t, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseModel {
    pub n: usize,
    pub k: f64,
    pub q_nm1: f64,
    pub a0: f64,
    pub a1: f64,
}

impl PhaseModel {
    pub fn new(n: usize, k: f64, q_nm1: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("the phase model needs n >= 1".into()));
        }
        let nf = n as f64;
        Ok(Self { n, k, q_nm1, a0: PI * (2.0 * PI).powf(1.0 / nf) / nf, a1: a1_constant(n) })
    }

    pub fn from_operator(op: &OperatorCoefficients, k: f64) -> Result<Self> {
        let n = op.n();
        if n == 0 {
            return Err(Error::Config("the phase model needs n >= 1".into()));
        }
        Self::new(n, k, op.q().coeff(n - 1))
    }

    fn log_scaled(&self, s: f64) -> f64 {
        ((2.0 * PI).powf(1.0 / self.n as f64) * s).ln()
    }

    /// `γ₀(s) = −nπ⁻¹ ln((2π)^{1/n}s) + nπ⁻¹`.
    pub fn gamma0(&self, s: f64) -> f64 {
        let nf = self.n as f64;
        -nf / PI * self.log_scaled(s) + nf / PI
    }

    /// `γ₁(s) = π⁻¹ L (n ln|π⁻¹ n L| − n − q_{n−1})`, `L = ln((2π)^{1/n}s)`; zero at `L = 0`.
    pub fn gamma1(&self, s: f64) -> f64 {
        let nf = self.n as f64;
        let l = self.log_scaled(s);
        if l == 0.0 {
            return 0.0;
        }
        l / PI * (nf * (nf * l / PI).abs().ln() - nf - self.q_nm1)
    }

    /// `γ(N,k) = Nγ₀(|N/k|) + γ₁(|N/k|) + sgn N (π/4 + a₁|k|)` for the model's `k`.
    pub fn gamma(&self, n_big: f64) -> Result<f64> {
        phase_gamma(n_big, self.k, self)
    }

    /// `ω(t,k)` as a function of `ln t`.
    pub fn omega(&self, ln_t: f64) -> Result<f64> {
        self.gamma(ln_t)
    }
}

/// `γ(N,k)` with an explicit `k` (the model's own `k` is ignored).
pub fn phase_gamma(n_big: f64, k: f64, model: &PhaseModel) -> Result<f64> {
    if n_big == 0.0 || k == 0.0 {
        return Err(Error::SingularArgument(format!("gamma(N, k) needs N != 0 and k != 0 (N = {n_big}, k = {k})")));
    }
    let s = (n_big / k).abs();
    Ok(n_big * model.gamma0(s) + model.gamma1(s) + n_big.signum() * (PI / 4.0 + model.a1 * k.abs()))
}

/// `ξ(x)`, `ϱ(x) = η(ξ(x)) − q_{n−1}ξ(x)/n` and `ζ(x) = e^{iϱ(x)} ξ'(x)^{1/2}`.
#[derive(Debug, Clone, Copy)]
pub struct HankelGeometry<'a> {
    cov: &'a ChangeOfVariables<f64>,
    n: usize,
    q_nm1: f64,
}

impl<'a> HankelGeometry<'a> {
    pub fn new(cov: &'a ChangeOfVariables<f64>, q_nm1: f64) -> Result<Self> {
        if !cov.profile().is_cosh() {
            return Err(Error::Config("Hankel eigenfunctions need the cosh weight".into()));
        }
        Ok(Self { cov, n: cov.n(), q_nm1 })
    }

    pub fn from_operator(op: &'a OperatorCoefficients) -> Result<Self> {
        let cov = op.cov().ok_or_else(|| Error::Config("operator has no change of variables".into()))?;
        Self::new(cov, op.q().coeff(op.n() - 1))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn xi(&self, x: f64) -> Result<f64> {
        self.cov.xi_of_x(x)
    }

    pub fn xi_prime(&self, x: f64) -> Result<f64> {
        self.cov.xi_prime(x)
    }

    pub fn varrho(&self, x: f64) -> Result<f64> {
        let s = self.xi(x)?;
        Ok(eta_phase(s) - self.q_nm1 * s / self.n as f64)
    }

    pub fn zeta(&self, x: f64) -> Result<C> {
        Ok(C::from_polar(self.xi_prime(x)?.sqrt(), self.varrho(x)?))
    }

    /// `π⁻¹ ln(a₀x)(n ln|π⁻¹n ln(a₀x)| − n − q_{n−1})`, extended oddly.
    pub fn varrho_asymptotic(&self, x: f64) -> f64 {
        let nf = self.n as f64;
        let a0 = self.cov.a0().expect("cosh weight");
        let l = (a0 * x.abs()).ln();
        x.signum() * l / PI * (nf * (nf * l / PI).abs().ln() - nf - self.q_nm1)
    }

    /// `(ξ, ξ', ξ'')` at `x`.
    fn xi_derivatives(&self, x: f64) -> Result<[f64; 3]> {
        let j = self.cov.xi_jet(x, 3)?;
        Ok([j.value(), j.derivative_at(1), j.derivative_at(2)])
    }

    /// `(ϱ, ϱ', ϱ'')` at `x`, with `η'` and `η''` by central differences.
    fn varrho_derivatives(&self, xi: &[f64; 3]) -> [f64; 3] {
        let h = 1e-3;
        let e = |s: f64| eta_phase(s);
        let (em, e0, ep) = (e(xi[0] - h), e(xi[0]), e(xi[0] + h));
        let d1 = (ep - em) / (2.0 * h);
        let d2 = (ep - 2.0 * e0 + em) / (h * h);
        let c = self.q_nm1 / self.n as f64;
        [e0 - c * xi[0], (d1 - c) * xi[1], d2 * xi[1] * xi[1] + (d1 - c) * xi[2]]
    }
}

pub fn varrho(x: f64, q_nm1: f64, cov: &ChangeOfVariables<f64>) -> Result<f64> {
    HankelGeometry::new(cov, q_nm1)?.varrho(x)
}

pub fn zeta_amplitude(x: f64, q_nm1: f64, cov: &ChangeOfVariables<f64>) -> Result<C> {
    HankelGeometry::new(cov, q_nm1)?.zeta(x)
}

/// Leading asymptotic term for `Θ(N) = √t θ(t,k)`: `√(n/(π|k|))` times
/// `s e^{iω} + e^{−iω}` (odd n, `Nk > 0`), zero (odd n, `Nk < 0`), and for even n
/// `s₁₁e^{iω} + e^{−iω}`, `s₂₁e^{−iω}` (`k > 0`, `N ≷ 0`) or
/// `s₁₂e^{iω}`, `e^{iω} + s₂₂e^{−iω}` (`k < 0`, `N ≷ 0`).
///
/// `s` is `[s]` for odd n and `[s11, s12, s21, s22]` for even n.
pub fn theta_asymptotic(ln_t: f64, k: f64, model: &PhaseModel, s: &[C]) -> Result<C> {
    let n = model.n;
    let expected = if n % 2 == 1 { 1 } else { 4 };
    if s.len() != expected {
        return Err(Error::Config(format!("expected {expected} scattering entries for n = {n}")));
    }
    let w = phase_gamma(ln_t, k, model)?;
    let (ep, em) = (C::from_polar(1.0, w), C::from_polar(1.0, -w));
    let one = C::new(1.0, 0.0);
    let combo = if n % 2 == 1 {
        if ln_t * k > 0.0 {
            s[0] * ep + em
        } else {
            C::new(0.0, 0.0)
        }
    } else {
        let (s11, s12, s21, s22) = (s[0], s[1], s[2], s[3]);
        match (k > 0.0, ln_t > 0.0) {
            (true, true) => s11 * ep + em,
            (true, false) => s21 * em,
            (false, true) => s12 * ep,
            (false, false) => one * ep + s22 * em,
        }
    };
    Ok(combo * (n as f64 / (PI * k.abs())).sqrt())
}

/// Settings for the eigenfunction integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaConfig {
    /// Core radius; `None` picks `max(60, 2.5·x_N(N_max))`.
    pub x_core: Option<f64>,
    pub n_max: f64,
    /// Mesh radius of the Lippmann–Schwinger solve.
    pub x_far: f64,
    /// Largest mesh step (further capped by `0.1/|k|`).
    pub h_max: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        Self { x_core: None, n_max: 35.0, x_far: 2000.0, h_max: 0.1 }
    }
}

impl ThetaConfig {
    pub fn mesh(&self, k_max: f64) -> Result<Mesh> {
        Mesh::graded(self.x_far, self.h_max.min(0.1 / k_max.abs()))
    }
}

/// Stationary point `x_N > 0` of `e^{−iNξ(x) ± ikx}`: `ξ'(x_N) = |k/N|`, with
/// the large-`x` predictor `n|N|/(π|k|) + a₁`.
pub fn stationary_point_predictor(n: usize, n_big: f64, k: f64) -> f64 {
    n as f64 * n_big.abs() / (PI * k.abs()) + a1_constant(n)
}

/// Far-field closure `∫_X^∞ e^{iΦ(u)} g(u) du` for one side and one mode.
#[derive(Debug, Clone, Copy)]
struct Closure {
    /// +1 for `x → +∞`, −1 for `x → −∞`.
    sigma: f64,
    /// Wave number of the mode, `±k`.
    kappa: f64,
    amplitude: C,
    x: f64,
    xi: [f64; 3],
    rho: [f64; 3],
}

impl Closure {
    /// Two integrations by parts with `Φ = σ(−Nξ + ϱ + κu)`, `g = ξ'^{1/2}`.
    fn value(&self, n_big: f64) -> C {
        if self.amplitude == C::new(0.0, 0.0) {
            return C::new(0.0, 0.0);
        }
        let s = self.sigma;
        let phi = s * (-n_big * self.xi[0] + self.rho[0] + self.kappa * self.x);
        let d1 = s * (-n_big * self.xi[1] + self.rho[1] + self.kappa);
        let d2 = s * (-n_big * self.xi[2] + self.rho[2]);
        let g = self.xi[1].sqrt();
        let g1 = self.xi[2] / (2.0 * g);
        let first = C::new(g, 0.0) / (I * d1);
        let h = C::new(g1 * d1 - g * d2, 0.0) / (I * d1 * d1);
        -C::from_polar(1.0, phi) * (first - h / (I * d1)) * self.amplitude
    }
}

/// `Θ(N)` split into its two contributions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThetaSample {
    #[serde(rename = "N")]
    pub n_big: f64,
    pub value: C,
    pub core: C,
    pub tail: C,
}

/// Precomputed quadrature for `𝓘(N,k)` at one `k`; cheap to evaluate for many `N`.
#[derive(Debug, Clone)]
pub struct ThetaIntegral {
    pub k: f64,
    pub n: usize,
    pub x_core: f64,
    pub x_far: f64,
    pub n_max: f64,
    core_xi: Vec<f64>,
    core_amp: Vec<C>,
    tail_xi: Vec<f64>,
    tail_amp: Vec<C>,
    closures: Vec<Closure>,
    r: RFunctions,
    x: Vec<f64>,
    q_nm1: f64,
}

const CORE_POINTS: usize = 8;
const TAIL_POINTS: usize = 12;

impl ThetaIntegral {
    /// Solve the Lippmann–Schwinger equation on the configured mesh and prepare the quadrature.
    pub fn solve(op: &OperatorCoefficients, k: f64, config: &ThetaConfig) -> Result<Self> {
        let problem = LsProblem::new(op, config.mesh(k)?)?;
        let field = problem.solve(k)?;
        Self::from_field(op, &field, config)
    }

    pub fn from_field(op: &OperatorCoefficients, field: &EigenfunctionField, config: &ThetaConfig) -> Result<Self> {
        let geo = HankelGeometry::from_operator(op)?;
        let n = op.n();
        let k = field.k;
        let x_far = *field.x.last().unwrap();
        let wanted = config
            .x_core
            .unwrap_or_else(|| (2.5 * stationary_point_predictor(n, config.n_max, k)).max(60.0));
        if wanted >= x_far {
            return Err(Error::Resolution {
                msg: format!("core radius {wanted} reaches the mesh radius {x_far}"),
                suggested_x_core: 0.5 * x_far,
            });
        }
        // snap the core edge to a mesh node (the mesh is symmetric)
        let edge = field.x.partition_point(|&v| v <= wanted) - 1;
        let x_core = field.x[edge];
        let psi = field.psi();

        let core_rule = gauss_legendre(CORE_POINTS);
        let cells: Vec<(f64, f64)> = field
            .x
            .windows(2)
            .filter(|w| w[0] >= -x_core && w[1] <= x_core)
            .map(|w| (w[0], w[1]))
            .collect();
        let core: Vec<(f64, C)> = cells
            .par_iter()
            .map(|&(lo, hi)| -> Result<Vec<(f64, C)>> {
                let (mid, hw) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                core_rule
                    .0
                    .iter()
                    .zip(&core_rule.1)
                    .map(|(t, w)| {
                        let x = mid + hw * t;
                        Ok((geo.xi(x)?, geo.zeta(x)? * interpolate_on(&field.x, psi, x) * (w * hw)))
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();

        let r = r_functions(field);
        let xi_core_edge = geo.xi_prime(x_core)?;
        let rate = k.abs() + config.n_max * xi_core_edge + 1.0;
        let panel = (2.0 * PI / rate).min(1.5);
        let panels = ((x_far - x_core) / panel).ceil() as usize;
        let panel = (x_far - x_core) / panels as f64;
        let tail_rule = gauss_legendre(TAIL_POINTS);
        let mut tail = Vec::with_capacity(2 * panels * TAIL_POINTS);
        for sigma in [1.0, -1.0] {
            let part: Vec<(f64, C)> = (0..panels)
                .into_par_iter()
                .map(|p| -> Result<Vec<(f64, C)>> {
                    let lo = x_core + p as f64 * panel;
                    let mid = lo + 0.5 * panel;
                    tail_rule
                        .0
                        .iter()
                        .zip(&tail_rule.1)
                        .map(|(t, w)| {
                            let u = mid + 0.5 * panel * t;
                            let x = sigma * u;
                            let mut osc = interpolate_on(&field.x, &r.plus, x) * (I * k * x).exp();
                            if let Some(m) = &r.minus {
                                osc += interpolate_on(&field.x, m, x) * (-I * k * x).exp();
                            }
                            let xi = geo.xi(u)?;
                            let zeta = C::from_polar(geo.xi_prime(u)?.sqrt(), sigma * geo.varrho(u)?);
                            Ok((sigma * xi, zeta * osc * (w * 0.5 * panel)))
                        })
                        .collect()
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            tail.extend(part);
        }

        let xi = geo.xi_derivatives(x_far)?;
        let rho = geo.varrho_derivatives(&xi);
        let mut closures = Vec::new();
        let (pl, pr) = r.plus_limits;
        closures.push(Closure { sigma: 1.0, kappa: k, amplitude: pr, x: x_far, xi, rho });
        closures.push(Closure { sigma: -1.0, kappa: k, amplitude: pl, x: x_far, xi, rho });
        if let Some((ml, mr)) = r.minus_limits {
            closures.push(Closure { sigma: 1.0, kappa: -k, amplitude: mr, x: x_far, xi, rho });
            closures.push(Closure { sigma: -1.0, kappa: -k, amplitude: ml, x: x_far, xi, rho });
        }

        let (core_xi, core_amp) = core.into_iter().unzip();
        let (tail_xi, tail_amp) = tail.into_iter().unzip();
        Ok(Self {
            k,
            n,
            x_core,
            x_far,
            n_max: config.n_max,
            core_xi,
            core_amp,
            tail_xi,
            tail_amp,
            closures,
            r,
            x: field.x.clone(),
            q_nm1: op.q().coeff(n - 1),
        })
    }

    fn check_resolution(&self, n_big: f64) -> Result<()> {
        let xn = stationary_point_predictor(self.n, n_big, self.k);
        if 1.25 * xn > self.x_core {
            return Err(Error::Resolution {
                msg: format!("stationary point x_N = {xn:.2} is not inside the core |x| <= {:.2}", self.x_core),
                suggested_x_core: 2.5 * xn,
            });
        }
        Ok(())
    }

    /// `Θ(N) = (2π)^{−1/2} 𝓘(N,k)` with its core and tail parts.
    pub fn sample(&self, n_big: f64) -> Result<ThetaSample> {
        self.check_resolution(n_big)?;
        let sum = |xi: &[f64], amp: &[C]| -> C { xi.iter().zip(amp).map(|(&s, a)| a * C::from_polar(1.0, -n_big * s)).sum() };
        let core = sum(&self.core_xi, &self.core_amp);
        let mut tail = sum(&self.tail_xi, &self.tail_amp);
        for c in &self.closures {
            tail += c.value(n_big);
        }
        let norm = (2.0 * PI).powf(-0.5);
        Ok(ThetaSample { n_big, value: (core + tail) * norm, core: core * norm, tail: tail * norm })
    }

    pub fn eigenfunction(&self, n_grid: &[f64]) -> Result<HankelEigenfunction> {
        let samples = n_grid.par_iter().map(|&nb| self.sample(nb)).collect::<Result<Vec<_>>>()?;
        Ok(HankelEigenfunction { k: self.k, x_core: self.x_core, x_far: self.x_far, samples })
    }

    /// Stationary-phase prediction of `Θ(N)`: the two stationary points `±x_N`
    /// of `e^{−iNξ(x) + i sgn(N)|k|x}` with the full-line Fresnel term, exact
    /// `ξ''` and the mesh values of `ζ r₊` (`Nk > 0`) or `ζ r₋` (`Nk < 0`).
    pub fn stationary_term(&self, op: &OperatorCoefficients, n_big: f64) -> Result<C> {
        let geo = HankelGeometry::from_operator(op)?;
        let ka = self.k.abs();
        let na = n_big.abs();
        if n_big == 0.0 {
            return Err(Error::SingularArgument("N = 0 has no stationary point".into()));
        }
        let amp = if n_big * self.k > 0.0 { Some(&self.r.plus) } else { self.r.minus.as_ref() };
        let Some(amp) = amp else {
            return Ok(C::new(0.0, 0.0));
        };
        // ξ'(x) = |k|/|N| on x > 0
        let target = ka / na;
        if geo.xi_prime(0.0)? <= target {
            return Err(Error::Precondition(format!("no stationary point for |N| = {na}")));
        }
        let (mut lo, mut hi) = (0.0, stationary_point_predictor(self.n, n_big, self.k).max(1.0) * 4.0);
        while geo.xi_prime(hi)? > target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if geo.xi_prime(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * hi {
                break;
            }
        }
        let x_n = 0.5 * (lo + hi);
        if x_n > self.x_far {
            return Err(Error::Resolution { msg: "stationary point beyond the mesh".into(), suggested_x_core: 2.5 * x_n });
        }
        let mut total = C::new(0.0, 0.0);
        for tau in [1.0, -1.0] {
            let xs = tau * x_n;
            let jet = geo.cov_xi_jet(xs)?;
            // φ(y) = −ξ(|N|(τy_N + y)) + |k|(τy_N + y), as a jet in y
            let phase = JetFn {
                f: move |v: Jet<f64>| {
                    let len = v.len();
                    let mut c = jet.truncate(len).coeffs().to_vec();
                    let mut f = 1.0;
                    for ci in c.iter_mut() {
                        *ci *= -f;
                        f *= na;
                    }
                    let mut out = Jet::from_coeffs(&c);
                    out = out + Jet::constant(ka * xs / na, len);
                    if len > 1 {
                        out = out + Jet::variable(0.0, len).scale(ka);
                    }
                    out
                },
                support: None,
            };
            let g0 = geo.zeta(xs)? * interpolate_on(&self.x, amp, xs.clamp(self.x[0], *self.x.last().unwrap()));
            let unit = JetFn { f: |v: Jet<f64>| Jet::constant(1.0, v.len()), support: None };
            total += leading_term(&phase, &unit, n_big, true) * g0;
        }
        let _ = self.q_nm1;
        Ok(total * na * (2.0 * PI).powf(-0.5))
    }
}

impl HankelGeometry<'_> {
    /// Jet of `ξ` at `x` (length 4).
    fn cov_xi_jet(&self, x: f64) -> Result<Jet<f64>> {
        self.cov.xi_jet(x, 4)
    }
}

/// `Θ` on an `N`-grid for one `k`.
#[derive(Debug, Clone, Serialize)]
pub struct HankelEigenfunction {
    pub k: f64,
    pub x_core: f64,
    pub x_far: f64,
    pub samples: Vec<ThetaSample>,
}

impl HankelEigenfunction {
    pub fn sup(&self) -> f64 {
        self.samples.iter().map(|s| s.value.norm()).fold(0.0, f64::max)
    }
}

/// `Θ(ln t)` for a single point, solving the field from scratch.
pub fn theta_integral(ln_t: f64, k: f64, op: &OperatorCoefficients, config: &ThetaConfig) -> Result<C> {
    Ok(ThetaIntegral::solve(op, k, config)?.sample(ln_t)?.value)
}

/// Sup and difference-quotient constants over a `(N, k)` grid.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub k_grid: Vec<f64>,
    pub n_grid: Vec<f64>,
    /// `sup |Θ(N,k)|`.
    pub sup_constant: f64,
    /// `max |Θ(N,k′) − Θ(N,k)| / (⟨N⟩|k′ − k|)` over adjacent grid points.
    pub difference_constant: f64,
    /// The same maximum for each adjacent pair.
    pub pair_constants: Vec<f64>,
}

pub fn eigenfunction_bounds(op: &OperatorCoefficients, k_grid: &[f64], n_grid: &[f64], config: &ThetaConfig) -> Result<BoundsReport> {
    if k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("the k-grid must be strictly increasing".into()));
    }
    let k_max = k_grid.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let problem = LsProblem::new(op, config.mesh(k_max)?)?;
    let funcs = k_grid
        .iter()
        .map(|&k| {
            let field = problem.solve(k)?;
            ThetaIntegral::from_field(op, &field, config)?.eigenfunction(n_grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let sup_constant = funcs.iter().map(|f| f.sup()).fold(0.0, f64::max);
    let pair_constants: Vec<f64> = funcs
        .windows(2)
        .map(|w| {
            let dk = (w[1].k - w[0].k).abs();
            w[0].samples
                .iter()
                .zip(&w[1].samples)
                .map(|(a, b)| (b.value - a.value).norm() / ((1.0 + a.n_big * a.n_big).sqrt() * dk))
                .fold(0.0, f64::max)
        })
        .collect();
    let difference_constant = pair_constants.iter().copied().fold(0.0, f64::max);
    Ok(BoundsReport { k_grid: k_grid.to_vec(), n_grid: n_grid.to_vec(), sup_constant, difference_constant, pair_constants })
}

/// Samples `g(a)` of `u(t) = t^{−1/2} g(ln t)` on a uniform grid in `a = ln t`.
#[derive(Debug, Clone)]
pub struct LogSamples {
    pub a0: f64,
    pub h: f64,
    pub g: Vec<C>,
}

impl LogSamples {
    pub fn a(&self, j: usize) -> f64 {
        self.a0 + j as f64 * self.h
    }

    /// `u(t) = t^{−1/2+iξ₀} exp(−(ln t − μ)²/(2σ²))`, sampled on `μ ± 14σ`.
    pub fn gaussian_in_log(mu: f64, sigma: f64, xi0: f64, h: f64) -> Self {
        let half = 14.0 * sigma;
        let count = (2.0 * half / h).ceil() as usize + 1;
        let a0 = mu - half;
        let g = (0..count)
            .map(|j| {
                let a = a0 + j as f64 * h;
                C::from_polar((-(a - mu).powi(2) / (2.0 * sigma * sigma)).exp(), xi0 * a)
            })
            .collect();
        Self { a0, h, g }
    }

    /// `‖u‖² = ∫|g(a)|² da`.
    pub fn norm_sqr(&self) -> f64 {
        self.g.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.h
    }

    fn check_decay(&self) -> Result<()> {
        let peak = self.g.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let ends = self.g[0].norm().max(self.g.last().unwrap().norm());
        if ends > 1e-12 * peak {
            return Err(Error::Convergence(format!("test function has not decayed at the grid ends ({ends:.2e})")));
        }
        Ok(())
    }
}

/// `(Mu)(ξ) = (2π)^{−1/2} ∫ g(a) e^{−iξa} da`.
pub fn mellin_transform(u: &LogSamples, xi: f64) -> C {
    let s: C = u.g.iter().enumerate().map(|(j, g)| g * C::from_polar(1.0, -xi * u.a(j))).sum();
    s * u.h * (2.0 * PI).powf(-0.5)
}

/// `(Fu)(ξ) = e^{−iη(ξ)} (Mu)(−ξ)` on a grid.
pub fn mellin_f(u: &LogSamples, xi_grid: &[f64]) -> Result<Vec<C>> {
    u.check_decay()?;
    Ok(xi_grid.par_iter().map(|&xi| C::from_polar(1.0, -eta_phase(xi)) * mellin_transform(u, -xi)).collect())
}

/// `(Hu,u) = ∫∫ P(ln(eᵃ + eᵇ)) g(b) conj g(a) / (2cosh((a − b)/2)) da db`.
pub fn hankel_form(u: &LogSamples, p: &RealPolynomial<f64>) -> Result<C> {
    u.check_decay()?;
    let len = u.g.len();
    let rows: Vec<C> = (0..len)
        .into_par_iter()
        .map(|i| {
            let a = u.a(i);
            let mut s = C::new(0.0, 0.0);
            for j in 0..len {
                let b = u.a(j);
                let d = (a - b).abs();
                let lse = a.max(b) + (-d).exp().ln_1p();
                s += u.g[j] * (p.eval(lse) / (2.0 * (0.5 * d).cosh()));
            }
            s * u.g[i].conj()
        })
        .collect();
    Ok(rows.iter().sum::<C>() * u.h * u.h)
}

/// `∫ Q(D)f · conj f dξ` with `f = v·Fu`, `D = −i d/dξ` by 8th-order differences
/// on the uniform grid `ξ₀ + jΔ`.
pub fn symbol_form(fu: &[C], xi0: f64, dxi: f64, q: &RealPolynomial<f64>) -> C {
    let v = |s: f64| (PI / (PI * s).cosh()).sqrt();
    let f: Vec<C> = fu.iter().enumerate().map(|(j, x)| x * v(xi0 + j as f64 * dxi)).collect();
    const W: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let diff = |g: &[C]| -> Vec<C> {
        let len = g.len();
        let at = |i: isize| if i < 0 || i >= len as isize { C::new(0.0, 0.0) } else { g[i as usize] };
        (0..len as isize)
            .map(|i| {
                let d: C = W.iter().enumerate().map(|(m, w)| (at(i + m as isize + 1) - at(i - m as isize - 1)) * *w).sum();
                -I * d / dxi
            })
            .collect()
    };
    let mut dm = f.clone();
    let mut acc = vec![C::new(0.0, 0.0); f.len()];
    for m in 0..=q.degree() {
        if m > 0 {
            dm = diff(&dm);
        }
        let qm = q.coeff(m);
        acc.iter_mut().zip(&dm).for_each(|(a, d)| *a += d * qm);
    }
    acc.iter().zip(&f).map(|(a, b)| a * b.conj()).sum::<C>() * dxi
}

/// Both sides of `(Hu,u) = (AFu,Fu)` for one test function.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadraticFormCheck {
    pub hankel: C,
    pub symbol: C,
    /// `|(Hu,u) − (AFu,Fu)| / |(AFu,Fu)|`.
    pub residual: f64,
    /// `|‖Fu‖ − ‖u‖| / ‖u‖`.
    pub parseval_defect: f64,
}

/// Compares the two quadratic forms; `Fu` is tabulated on `±L` with step `dxi`.
pub fn quadratic_form_check(u: &LogSamples, p: &RealPolynomial<f64>, xi_half_width: f64, dxi: f64) -> Result<QuadraticFormCheck> {
    let count = (2.0 * xi_half_width / dxi).round() as usize + 1;
    let xi0 = -xi_half_width;
    let grid: Vec<f64> = (0..count).map(|j| xi0 + j as f64 * dxi).collect();
    let fu = mellin_f(u, &grid)?;
    let peak = fu.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if fu[0].norm().max(fu[count - 1].norm()) > 1e-10 * peak {
        return Err(Error::Convergence("Fu has not decayed on the xi-window".into()));
    }
    let q = p_to_q(p);
    let symbol = symbol_form(&fu, xi0, dxi, &q);
    let hankel = hankel_form(u, p)?;
    let fu_norm = (fu.iter().map(|v| v.norm_sqr()).sum::<f64>() * dxi).sqrt();
    let u_norm = u.norm_sqr().sqrt();
    Ok(QuadraticFormCheck {
        hankel,
        symbol,
        residual: (hankel - symbol).norm() / symbol.norm(),
        parseval_defect: (fu_norm - u_norm).abs() / u_norm,
    })
}

/// `∫ π/cosh(πξ) |Fu(ξ)|² dξ`, the Carleman (`P = 1`) diagonal form.
pub fn carleman_multiplier_form(u: &LogSamples, xi_half_width: f64, dxi: f64) -> Result<f64> {
    let count = (2.0 * xi_half_width / dxi).round() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|j| -xi_half_width + j as f64 * dxi).collect();
    let fu = mellin_f(u, &grid)?;
    Ok(grid.iter().zip(&fu).map(|(&s, f)| PI / (PI * s).cosh() * f.norm_sqr()).sum::<f64>() * dxi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::WeightProfile;

    fn op(p: &[f64]) -> OperatorCoefficients {
        let q = p_to_q(&RealPolynomial::new(p.to_vec()));
        OperatorCoefficients::new(q, WeightProfile::cosh(p.len() - 1)).unwrap()
    }

    #[test]
    fn kernel_values() {
        let one = RealPolynomial::new(vec![1.0]);
        assert_eq!(hankel_kernel(2.0, &one).unwrap(), 0.5);
        let p = RealPolynomial::new(vec![0.3, -1.0, 1.0]);
        assert_eq!(hankel_kernel(1.0, &p).unwrap(), 0.3);
        let t: f64 = 3.7;
        assert!((hankel_kernel(1.0 / t, &p).unwrap() * (1.0 / t) - p.eval(-t.ln())).abs() < 1e-14);
        assert!(matches!(hankel_kernel(0.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn phase_model_identities() {
        let m = PhaseModel::new(2, 0.7, -0.4).unwrap();
        let s = std::f64::consts::E * (2.0 * PI).powf(-0.5);
        assert!(m.gamma0(s).abs() < 1e-15);
        for nb in [-12.0, 3.0, 40.0] {
            let s = (nb / m.k).abs();
            let g = m.gamma(nb).unwrap();
            let rest = g - nb * m.gamma0(s) - m.gamma1(s);
            assert!((rest - nb.signum() * (PI / 4.0 + m.a1 * 0.7)).abs() < 1e-12);
            assert_eq!(m.omega(nb).unwrap().to_bits(), g.to_bits());
        }
        assert!(matches!(m.gamma(0.0), Err(Error::SingularArgument(_))));
        assert!(matches!(phase_gamma(1.0, 0.0, &m), Err(Error::SingularArgument(_))));
        // ω ≈ −nπ⁻¹ N ln|N/k|
        let nb = 1e3;
        let ratio = m.gamma(nb).unwrap() / (-2.0 / PI * nb * (nb / m.k).abs().ln());
        assert!((ratio - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn varrho_and_zeta() {
        let o = op(&[0.0, 0.0, 1.0]);
        let g = HankelGeometry::from_operator(&o).unwrap();
        assert_eq!(g.varrho(0.0).unwrap(), 0.0);
        for x in [0.4, 7.0, 300.0] {
            assert!((g.varrho(-x).unwrap() + g.varrho(x).unwrap()).abs() < 1e-12);
            let z = g.zeta(x).unwrap();
            assert!((z.norm_sqr() - g.xi_prime(x).unwrap()).abs() < 1e-13);
        }
        let z0 = g.zeta(0.0).unwrap();
        assert!(z0.im == 0.0 && z0.re > 0.0);
    }

    #[test]
    fn varrho_asymptotic_residual_decays() {
        // the residual is the Stirling remainder of η, 1/(24ξ) + O(ξ⁻³), up to O(ln ξ/x)
        let o = op(&[0.3, 0.2, 1.0]);
        let g = HankelGeometry::from_operator(&o).unwrap();
        let mut last = f64::INFINITY;
        for x in crate::statphase::geometric_grid(1e3, 1e6, 7) {
            let r = g.varrho(x).unwrap() - g.varrho_asymptotic(x);
            let xi = g.xi(x).unwrap();
            assert!((r * xi - 1.0 / 24.0).abs() < 2e-3, "x {x}: r xi = {}", r * xi);
            assert!(r.abs() < last);
            last = r.abs();
        }
        let zs: Vec<f64> = crate::statphase::geometric_grid(1e2, 1e5, 7).iter().map(|&x| g.zeta(x).unwrap().norm().ln()).collect();
        let lz: Vec<f64> = crate::statphase::geometric_grid(1e2, 1e5, 7).iter().map(|x| x.ln()).collect();
        let zslope = crate::quad::linear_fit(&lz, &zs).0;
        assert!((zslope + 0.5).abs() < 0.05, "zeta slope {zslope}");
    }

    #[test]
    fn asymptotic_branches() {
        let m3 = PhaseModel::new(3, 1.0, 0.0).unwrap();
        let s = [C::from_polar(1.0, 0.3)];
        assert_eq!(theta_asymptotic(-20.0, 1.0, &m3, &s).unwrap(), C::new(0.0, 0.0));
        let w = m3.omega(20.0).unwrap();
        let v = theta_asymptotic(20.0, 1.0, &m3, &s).unwrap();
        let expect = (s[0] * C::from_polar(1.0, w) + C::from_polar(1.0, -w)) * (3.0 / PI).sqrt();
        assert!((v - expect).norm() < 1e-14);
        let m2 = PhaseModel::new(2, -1.0, 0.0).unwrap();
        let s2 = [C::new(0.1, 0.0), C::new(0.2, 0.0), C::new(0.3, 0.0), C::new(0.4, 0.5)];
        let w = phase_gamma(-15.0, -1.0, &m2).unwrap();
        let v = theta_asymptotic(-15.0, -1.0, &m2, &s2).unwrap();
        let expect = (C::from_polar(1.0, w) + s2[3] * C::from_polar(1.0, -w)) * (2.0 / PI).sqrt();
        assert!((v - expect).norm() < 1e-14);
    }

    #[test]
    fn carleman_diagonalization_and_parseval() {
        let u = LogSamples::gaussian_in_log(0.3, 1.0, 0.7, 0.02);
        let one = RealPolynomial::new(vec![1.0]);
        let c = quadratic_form_check(&u, &one, 16.0, 0.01).unwrap();
        assert!(c.parseval_defect < 1e-8, "parseval {}", c.parseval_defect);
        let diag = carleman_multiplier_form(&u, 16.0, 0.01).unwrap();
        assert!((c.hankel.re - diag).abs() < 1e-6 * diag && c.hankel.im.abs() < 1e-10);
    }

    #[test]
    fn theta_bounded_and_split_independent() {
        let o = op(&[0.0, 0.0, 1.0]);
        let cfg = ThetaConfig::default();
        let field = LsProblem::new(&o, cfg.mesh(1.0).unwrap()).unwrap().solve(1.0).unwrap();
        let base = ThetaIntegral::from_field(&o, &field, &cfg).unwrap();
        let wide = ThetaIntegral::from_field(&o, &field, &ThetaConfig { x_core: Some(1.5 * base.x_core), ..cfg }).unwrap();
        let grid: Vec<f64> = (-30..=30).map(f64::from).collect();
        let a = base.eigenfunction(&grid).unwrap();
        let b = wide.eigenfunction(&grid).unwrap();
        assert!(a.sup() < 3.0, "sup {}", a.sup());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x.value - y.value).norm() < 1e-4 * a.sup(), "N = {}", x.n_big);
        }
        let tight = ThetaIntegral::from_field(&o, &field, &ThetaConfig { x_core: Some(20.0), ..cfg }).unwrap();
        assert!(matches!(tight.sample(30.0), Err(Error::Resolution { .. })));
    }

    #[test]
    fn slow_decay_is_rejected() {
        let u = LogSamples { a0: -1.0, h: 0.1, g: vec![C::new(1.0, 0.0); 21] };
        assert!(matches!(mellin_f(&u, &[0.0]), Err(Error::Convergence(_))));
    }
}
