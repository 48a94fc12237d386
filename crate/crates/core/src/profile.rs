//! Weight functions `v(ξ)` and the change of variables `x(ξ) = ∫₀^ξ v^{-2/n}`.
//!
//! Three closed-form families are built in:
//!
//! * `cosh`: `v = √π / √cosh(πξ)`, the weight of the Hankel problem;
//! * `power_law(α)`: `v = (1 + ξ²)^{-α/2}`;
//! * `stretched_exp(α, β)`: `v = exp(-β (1 + ξ²)^{α/2})`.
//!
//! [`ChangeOfVariables`] tabulates `x(ξ)` once on a graded grid of nodes and
//! keeps a Taylor jet of `x` at every node, so later evaluations cost one
//! short polynomial evaluation.

use serde::{Deserialize, Serialize};

use crate::quad::{adaptive_simpson, gl20, gl_composite, gl_fixed, linear_fit};
use crate::taylor::Jet;
use crate::{Error, Real, Result};

/// Number of Taylor coefficients kept per grid node.
const NODE_JET_LEN: usize = 22;
/// Largest |ξ| accepted for the cosh family.
pub const COSH_XI_GUARD: f64 = 200.0 / std::f64::consts::PI;
/// Grid construction stops once `x` exceeds this for non-cosh families.
const X_LIMIT: f64 = 1e12;

#[inline]
fn c<T: Real>(x: f64) -> T {
    T::from_f64(x).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family<T> {
    Cosh,
    PowerLaw { alpha: T },
    StretchedExp { alpha: T, beta: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightProfile<T> {
    pub family: Family<T>,
    /// Order of the differential operator.
    pub n: usize,
}

impl<T: Real> WeightProfile<T> {
    pub fn cosh(n: usize) -> Self {
        Self { family: Family::Cosh, n }
    }

    pub fn power_law(alpha: T, n: usize) -> Result<Self> {
        if !(alpha > T::zero()) {
            return Err(Error::Config("power_law needs alpha > 0".into()));
        }
        Ok(Self { family: Family::PowerLaw { alpha }, n })
    }

    pub fn stretched_exp(alpha: T, beta: T, n: usize) -> Result<Self> {
        if !(alpha > T::zero()) || !(beta > T::zero()) {
            return Err(Error::Config("stretched_exp needs alpha > 0 and beta > 0".into()));
        }
        Ok(Self { family: Family::StretchedExp { alpha, beta }, n })
    }

    pub fn with_order(&self, n: usize) -> Self {
        Self { family: self.family, n }
    }

    pub fn is_cosh(&self) -> bool {
        matches!(self.family, Family::Cosh)
    }

    /// `ln v(ξ)`, evaluated without overflow.
    pub fn ln_v(&self, xi: T) -> T {
        let half = c::<T>(0.5);
        match self.family {
            Family::Cosh => {
                let y = (T::PI() * xi).abs();
                let ln_cosh = y + (-(y + y)).exp().ln_1p() - T::LN_2();
                half * T::PI().ln() - half * ln_cosh
            }
            Family::PowerLaw { alpha } => -half * alpha * (xi * xi).ln_1p(),
            Family::StretchedExp { alpha, beta } => {
                -beta * (T::one() + xi * xi).powf(half * alpha)
            }
        }
    }

    pub fn v(&self, xi: T) -> T {
        self.ln_v(xi).exp()
    }

    /// Taylor jet of `v` at `ξ` with `len` coefficients.
    pub fn v_jet(&self, xi: T, len: usize) -> Jet<T> {
        self.ln_v_jet(xi, len).exp()
    }

    /// Taylor jet of `ln v` at `ξ`.
    pub fn ln_v_jet(&self, xi: T, len: usize) -> Jet<T> {
        let h = Jet::variable(xi, len);
        let half = c::<T>(0.5);
        match self.family {
            Family::Cosh => {
                // ln cosh(πξ) = ln(e^{π|ξ|}) + ln((1 + e^{-2πu})/2) with u = sign(ξ)·ξ
                let s = if xi < T::zero() { -T::one() } else { T::one() };
                let u = h.scale(s * T::PI());
                let e = (u.scale(-c::<T>(2.0))).exp();
                let one = Jet::constant(T::one(), len);
                let ln_cosh = u + (one + e).ln() - Jet::constant(T::LN_2(), len);
                Jet::constant(half * T::PI().ln(), len) - ln_cosh.scale(half)
            }
            Family::PowerLaw { alpha } => {
                let one = Jet::constant(T::one(), len);
                (one + h * h).ln().scale(-half * alpha)
            }
            Family::StretchedExp { alpha, beta } => {
                let one = Jet::constant(T::one(), len);
                (one + h * h).powf(half * alpha).scale(-beta)
            }
        }
    }

    /// `[v, v', …, v^{(order)}]` at `ξ` by Taylor-mode differentiation.
    pub fn v_derivatives(&self, xi: T, order: usize) -> Result<Vec<T>> {
        if order > 12 {
            return Err(Error::Config(format!("derivative order {order} exceeds 12")));
        }
        let j = self.v_jet(xi, order + 1);
        Ok((0..=order).map(|k| j.derivative_at(k)).collect())
    }

    /// Decay exponents `(γ, δ)` from log-log regression on `ξ ∈ [5, 50]`,
    /// clipped to the range resolved by `cov`.
    pub fn decay_parameters(&self, cov: &ChangeOfVariables<T>) -> (f64, f64) {
        let n = self.n as f64;
        let hi = cov.xi_max().to_f64().unwrap().min(50.0) * 0.98;
        let lo = 5.0f64.min(0.5 * hi);
        let m = 48;
        let grid: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
        let ln_x: Vec<f64> = grid
            .iter()
            .map(|&s| cov.x_of_xi(c::<T>(s)).unwrap().to_f64().unwrap().ln())
            .collect();
        let ln_v2: Vec<f64> = grid.iter().map(|&s| 2.0 * self.ln_v(c::<T>(s)).to_f64().unwrap()).collect();
        let (slope, _) = linear_fit(&ln_x, &ln_v2);
        let gamma = -slope / n;
        let ln_v: Vec<f64> = ln_v2.iter().map(|v| 0.5 * v).collect();
        let mut delta = 0.0f64;
        for p in 1..=4usize {
            let ln_dp: Vec<f64> = grid
                .iter()
                .map(|&s| {
                    // derivatives relative to v avoid underflow at large ξ
                    let lj = self.ln_v_jet(c::<T>(s), p + 1);
                    let mut lj0 = lj;
                    lj0 = lj0 - Jet::constant(lj.value(), p + 1);
                    let ratio = lj0.exp().derivative_at(p).to_f64().unwrap().abs();
                    ratio.max(1e-300).ln() + self.ln_v(c::<T>(s)).to_f64().unwrap()
                })
                .collect();
            let (sp, _) = linear_fit(&ln_v, &ln_dp);
            delta = delta.max((sp - 1.0) / p as f64);
        }
        (gamma, delta.max(0.0))
    }
}

/// Cached monotone map `x(ξ)`, its inverse and the large-ξ constants.
#[derive(Debug, Clone)]
pub struct ChangeOfVariables<T> {
    profile: WeightProfile<T>,
    nodes: Vec<T>,
    x_nodes: Vec<T>,
    /// Jet of `x` at each node.
    jets: Vec<Jet<T>>,
    a0: Option<T>,
    a1: Option<T>,
}

impl<T: Real> ChangeOfVariables<T> {
    pub fn new(profile: WeightProfile<T>) -> Result<Self> {
        if profile.n == 0 {
            return Err(Error::Config("change of variables needs n >= 1".into()));
        }
        let n = c::<T>(profile.n as f64);
        let two_over_n = c::<T>(2.0) / n;
        let rho = if profile.is_cosh() { c::<T>(0.5) } else { T::one() };
        let guard = if profile.is_cosh() { c::<T>(COSH_XI_GUARD) } else { T::infinity() };
        let ln_phi = |s: T| -two_over_n * profile.ln_v(s);
        let phi = |s: T| ln_phi(s).exp();

        let mut nodes = vec![T::zero()];
        let mut x_nodes = vec![T::zero()];
        let mut jets = vec![Self::node_jet(&profile, T::zero(), T::zero())];
        loop {
            let s = *nodes.last().unwrap();
            if s >= guard {
                break;
            }
            let lj = profile.ln_v_jet(s, 2);
            let rate = (two_over_n * lj.coeff(1)).abs();
            let radius = (s * s + rho * rho).sqrt();
            let mut step = (radius * c::<T>(0.25)).min(c::<T>(0.5) / (rate + c::<T>(1e-3)));
            if s + step > guard {
                step = guard - s;
            }
            let next = s + step;
            let dx = gl_fixed(&phi, s, next, gl20());
            let xn = *x_nodes.last().unwrap() + dx;
            if !xn.is_finite() || !phi(next).is_finite() {
                break;
            }
            nodes.push(next);
            x_nodes.push(xn);
            jets.push(Self::node_jet(&profile, next, xn));
            if !profile.is_cosh() && xn > c::<T>(X_LIMIT) {
                break;
            }
        }

        let (a0, a1) = if profile.is_cosh() {
            let a0 = T::PI() * (c::<T>(2.0) * T::PI()).powf(T::one() / n) / n;
            (Some(a0), Some(c::<T>(a1_constant(profile.n))))
        } else {
            (None, None)
        };
        Ok(Self { profile, nodes, x_nodes, jets, a0, a1 })
    }

    fn node_jet(profile: &WeightProfile<T>, s: T, x: T) -> Jet<T> {
        let n = c::<T>(profile.n as f64);
        let phi = profile.ln_v_jet(s, NODE_JET_LEN - 1).scale(-c::<T>(2.0) / n).exp();
        let mut j = phi.integrate();
        j = j + Jet::constant(x, j.len());
        j
    }

    pub fn profile(&self) -> &WeightProfile<T> {
        &self.profile
    }

    pub fn n(&self) -> usize {
        self.profile.n
    }

    pub fn xi_max(&self) -> T {
        *self.nodes.last().unwrap()
    }

    pub fn x_max(&self) -> T {
        *self.x_nodes.last().unwrap()
    }

    /// `a₀ = π (2π)^{1/n} / n` (cosh family only).
    pub fn a0(&self) -> Option<T> {
        self.a0
    }

    /// Constant term of `x(ξ) − a₀⁻¹ e^{πξ/n}` as `ξ → ∞` (cosh family only).
    pub fn a1(&self) -> Option<T> {
        self.a1
    }

    fn nearest_node(&self, s: T) -> usize {
        let k = self.nodes.partition_point(|&t| t <= s).max(1) - 1;
        if k + 1 < self.nodes.len() && (self.nodes[k + 1] - s) < (s - self.nodes[k]) {
            k + 1
        } else {
            k
        }
    }

    /// `φ(ξ) = x'(ξ) = v(ξ)^{-2/n}`.
    pub fn phi(&self, xi: T) -> T {
        (-c::<T>(2.0) / c::<T>(self.n() as f64) * self.profile.ln_v(xi)).exp()
    }

    /// `ψ(ξ) = v(ξ)^{1 - 1/n}`.
    pub fn psi(&self, xi: T) -> T {
        let n = c::<T>(self.n() as f64);
        ((T::one() - T::one() / n) * self.profile.ln_v(xi)).exp()
    }

    pub fn x_of_xi(&self, xi: T) -> Result<T> {
        let s = xi.abs();
        if s > self.xi_max() {
            return Err(Error::Overflow(format!(
                "|xi| = {} exceeds the resolved range {}",
                s.to_f64().unwrap(),
                self.xi_max().to_f64().unwrap()
            )));
        }
        let k = self.nearest_node(s);
        let x = self.jets[k].eval(s - self.nodes[k]);
        Ok(if xi < T::zero() { -x } else { x })
    }

    /// `ξ(x)`: bracket on the node table, then safeguarded Newton.
    pub fn xi_of_x(&self, x: T) -> Result<T> {
        let ax = x.abs();
        if ax == T::zero() {
            return Ok(T::zero());
        }
        if ax > self.x_max() {
            return Err(Error::Overflow(format!(
                "|x| = {} exceeds the resolved range {}",
                ax.to_f64().unwrap(),
                self.x_max().to_f64().unwrap()
            )));
        }
        let k = (self.x_nodes.partition_point(|&t| t <= ax).max(1) - 1).min(self.nodes.len() - 2);
        let (mut lo, mut hi) = (self.nodes[k], self.nodes[k + 1]);
        let mut s = match (self.a0, self.a1) {
            (Some(a0), Some(a1)) if ax > c::<T>(1e3) => {
                let n = c::<T>(self.n() as f64);
                n / T::PI() * ((a0 * ax).ln() - a1 / ax)
            }
            _ => {
                let t = (ax - self.x_nodes[k]) / (self.x_nodes[k + 1] - self.x_nodes[k]);
                lo + t * (hi - lo)
            }
        };
        if !(s > lo && s < hi) {
            s = c::<T>(0.5) * (lo + hi);
        }
        let tol = c::<T>(1e-14);
        for _ in 0..100 {
            let f = self.x_of_xi(s)? - ax;
            if f > T::zero() {
                hi = s;
            } else {
                lo = s;
            }
            let mut next = s - f / self.phi(s);
            if !(next > lo && next < hi) {
                next = c::<T>(0.5) * (lo + hi);
            }
            let done = (next - s).abs() <= tol * (T::one() + s.abs());
            s = next;
            if done {
                break;
            }
        }
        Ok(if x < T::zero() { -s } else { s })
    }

    /// `ξ'(x) = v(ξ(x))^{2/n}`.
    pub fn xi_prime(&self, x: T) -> Result<T> {
        let s = self.xi_of_x(x)?;
        Ok(T::one() / self.phi(s))
    }

    /// Taylor jet of `ξ(x)` at `x`, from `ξ' = v(ξ)^{2/n}` by Picard iteration.
    pub fn xi_jet(&self, x: T, len: usize) -> Result<Jet<T>> {
        let s = self.xi_of_x(x)?;
        let n = c::<T>(self.n() as f64);
        let g = self.profile.ln_v_jet(s, len).scale(c::<T>(2.0) / n).exp();
        let mut d = Jet::zero(len);
        for _ in 0..len {
            d = g.compose(&d).integrate().truncate(len);
        }
        Ok(d + Jet::constant(s, len))
    }
}

/// Integrand `(2cosh πξ)^{1/n} − e^{πξ/n}`, written to avoid cancellation.
fn a1_integrand(n: usize, s: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let nn = n as f64;
    (pi * s / nn).exp() * ((-2.0 * pi * s).exp().ln_1p() / nn).exp_m1()
}

fn a1_from_integral(n: usize, integral: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let scale = (2.0 * pi).powf(-1.0 / n as f64);
    scale * integral - scale * n as f64 / pi
}

/// Truncation point where the integrand is below 1e-19.
fn a1_cutoff(n: usize) -> f64 {
    let rate = std::f64::consts::PI * (2.0 - 1.0 / n as f64);
    44.0 / rate
}

/// `a₁` for the cosh family, by composite Gauss–Legendre.
pub fn a1_constant(n: usize) -> f64 {
    let b = a1_cutoff(n);
    let i = gl_composite(|s| a1_integrand(n, s), 0.0, b, 64, 20);
    a1_from_integral(n, i)
}

/// `a₁` by adaptive Simpson, an independent rule for cross-checking.
pub fn a1_constant_simpson(n: usize) -> f64 {
    let b = a1_cutoff(n);
    let i = adaptive_simpson(&|s| a1_integrand(n, s), 0.0, b, 1e-13);
    a1_from_integral(n, i)
}
