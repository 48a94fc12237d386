//! The Liouville transform `B = L* A L` and the gauge that removes `b_{n-1}`.
//!
//! With `φ = v^{-2/n}` and `ψ = v^{1-1/n}`, derivatives of `f(x(ξ))` expand as
//! `(d/dξ)^j f(x(ξ)) = Σ_l τ_{j,l}(ξ) f^{(l)}(x(ξ))`, where each `τ_{j,l}` is an
//! integer combination of products `φ^{(κ₁)}⋯φ^{(κ_l)}`. [`TauTable`] keeps
//! those sums exactly. The coefficients are then
//!
//! `b_l = v^{1+1/n} i^l Σ_m q_m i^{-m} Σ_{j=l}^{m} C(m,j) ψ^{(m-j)} τ_{j,l}`,
//!
//! evaluated on Taylor jets so that derivatives in `x` come for free.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::coeffmap::RealPolynomial;
use crate::profile::{ChangeOfVariables, Family, WeightProfile};
use crate::quad::linear_fit;
use crate::taylor::Jet;
use crate::{Error, Result};

pub type CJet = Jet<Complex64>;

/// One product `coeff · φ^{(κ₁)}⋯φ^{(κ_l)}` with `κ` sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Monomial {
    pub coeff: i64,
    pub kappas: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct TauTable {
    pub j_max: usize,
    /// `entries[j][l]` for `1 ≤ l ≤ j ≤ j_max`; other slots are empty.
    entries: Vec<Vec<Vec<Monomial>>>,
}

fn collect(map: BTreeMap<Vec<u8>, i64>) -> Vec<Monomial> {
    map.into_iter()
        .filter(|(_, c)| *c != 0)
        .map(|(kappas, coeff)| Monomial { coeff, kappas })
        .collect()
}

/// Build `τ_{j,l}` from `τ_{1,1} = φ` and
/// `τ_{j+1,l} = τ_{j,l}' + τ_{j,l-1} φ`.
pub fn tau_table(j_max: usize) -> Result<TauTable> {
    if j_max > 10 {
        return Err(Error::Config(format!("j_max = {j_max} exceeds 10")));
    }
    let mut entries = vec![vec![Vec::new(); j_max + 2]; j_max + 1];
    if j_max >= 1 {
        entries[1][1] = vec![Monomial { coeff: 1, kappas: vec![0] }];
    }
    for j in 1..j_max {
        for l in 1..=j + 1 {
            let mut acc: BTreeMap<Vec<u8>, i64> = BTreeMap::new();
            if l <= j {
                for mono in &entries[j][l] {
                    for i in 0..mono.kappas.len() {
                        let mut k = mono.kappas.clone();
                        k[i] += 1;
                        k.sort_unstable();
                        *acc.entry(k).or_insert(0) += mono.coeff;
                    }
                }
            }
            if l >= 2 {
                for mono in &entries[j][l - 1] {
                    let mut k = mono.kappas.clone();
                    k.push(0);
                    k.sort_unstable();
                    *acc.entry(k).or_insert(0) += mono.coeff;
                }
            }
            entries[j + 1][l] = collect(acc);
        }
    }
    Ok(TauTable { j_max, entries })
}

impl TauTable {
    pub fn get(&self, j: usize, l: usize) -> &[Monomial] {
        &self.entries[j][l]
    }

    /// Evaluate `τ_{j,l}` given jets of `φ, φ', φ'', …`.
    pub fn eval_jet(&self, j: usize, l: usize, dphi: &[Jet<f64>], len: usize) -> Jet<f64> {
        let mut out = Jet::zero(len);
        for mono in self.get(j, l) {
            let mut p = Jet::constant(mono.coeff as f64, len);
            for &k in &mono.kappas {
                p = p * dphi[k as usize].truncate(len);
            }
            out = out + p;
        }
        out
    }
}

/// Smooth test functions with exact derivatives, for the identity checks.
#[derive(Debug, Clone, Copy)]
pub enum TestFunction {
    Constant(f64),
    Gaussian { center: f64, width: f64 },
    Sine { k: f64 },
}

impl TestFunction {
    /// Jet of `f` at `x`.
    pub fn jet(&self, x: f64, len: usize) -> Jet<f64> {
        match *self {
            TestFunction::Constant(c) => Jet::constant(c, len),
            TestFunction::Gaussian { center, width } => {
                let h = Jet::variable(x - center, len).scale(1.0 / width);
                (h * h).scale(-0.5).exp()
            }
            TestFunction::Sine { k } => {
                let mut f = 1.0;
                let mut coeffs = vec![0.0; len];
                for (i, c) in coeffs.iter_mut().enumerate() {
                    if i > 0 {
                        f *= i as f64;
                    }
                    let phase = k * x + i as f64 * std::f64::consts::FRAC_PI_2;
                    *c = k.powi(i as i32) * phase.sin() / f;
                }
                Jet::from_coeffs(&coeffs)
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x, 1).value()
    }
}

fn i_pow(p: i64) -> Complex64 {
    match p.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

pub fn binom(m: usize, j: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..j {
        r = r * (m - i) as f64 / (i + 1) as f64;
    }
    r
}

fn to_complex(j: &Jet<f64>) -> CJet {
    j.map(|c| Complex64::new(c, 0.0))
}

/// `Σ_m b_m (D + u)^m`: coefficients of the conjugated operator, given jets
/// of `b_m` (in `x`) and of `u = β'`. Each output jet is `n` shorter.
pub fn conjugate_by_gauge(b: &[CJet], u: &Jet<f64>) -> Vec<CJet> {
    let n = b.len() - 1;
    let len = b[0].len().min(u.len()).saturating_sub(n).max(1);
    let uc = to_complex(u);
    let mi = Complex64::new(0.0, -1.0);
    // a[k] = coefficient of D^k in (D+u)^m, as jets
    let mut a: Vec<CJet> = vec![CJet::constant(Complex64::new(1.0, 0.0), len + n)];
    let mut out: Vec<CJet> = vec![CJet::zero(len); n + 1];
    out[0] = b[0].truncate(len);
    for m in 1..=n {
        let cur_len = len + n - m;
        let mut next = vec![CJet::zero(cur_len); m + 1];
        for (k, ak) in a.iter().enumerate() {
            next[k] = next[k] + ak.diff().scale(mi).truncate(cur_len) + (uc * *ak).truncate(cur_len);
            next[k + 1] = next[k + 1] + ak.truncate(cur_len);
        }
        a = next;
        for (k, ak) in a.iter().enumerate() {
            out[k] = out[k] + (b[m].truncate(len) * ak.truncate(len));
        }
    }
    out
}

/// Evaluators for `b_m(x)` of `B` and `b̃_m(x)` of the gauged operator.
#[derive(Debug, Clone)]
pub struct OperatorCoefficients {
    q: RealPolynomial<f64>,
    profile: WeightProfile<f64>,
    cov: Option<ChangeOfVariables<f64>>,
    tau: TauTable,
}

impl OperatorCoefficients {
    /// `q` must be monic with degree equal to the profile's order.
    pub fn new(q: RealPolynomial<f64>, profile: WeightProfile<f64>) -> Result<Self> {
        let n = q.degree();
        if n != profile.n {
            return Err(Error::Config(format!(
                "symbol degree {n} does not match profile order {}",
                profile.n
            )));
        }
        if !q.is_monic() {
            return Err(Error::Config("symbol polynomial must be monic".into()));
        }
        if n > 10 {
            return Err(Error::Config("operator order above 10 is not supported".into()));
        }
        let cov = if n >= 1 { Some(ChangeOfVariables::new(profile)?) } else { None };
        Ok(Self { q, profile, cov, tau: tau_table(n.max(1))? })
    }

    pub fn n(&self) -> usize {
        self.q.degree()
    }

    pub fn q(&self) -> &RealPolynomial<f64> {
        &self.q
    }

    pub fn profile(&self) -> &WeightProfile<f64> {
        &self.profile
    }

    /// Change of variables; absent for `n = 0`, where `x = ξ`.
    pub fn cov(&self) -> Option<&ChangeOfVariables<f64>> {
        self.cov.as_ref()
    }

    pub fn tau(&self) -> &TauTable {
        &self.tau
    }

    /// `ξ(x)`; identity when `n = 0`.
    pub fn xi_of_x(&self, x: f64) -> Result<f64> {
        match &self.cov {
            Some(c) => c.xi_of_x(x),
            None => Ok(x),
        }
    }

    /// Jets in `ξ` of `b_0, …, b_n` at `ξ`.
    pub fn b_xi_jets(&self, xi: f64, len: usize) -> Vec<CJet> {
        let n = self.n();
        if n == 0 {
            let v2 = self.profile.ln_v_jet(xi, len).scale(2.0).exp();
            return vec![to_complex(&v2.scale(self.q.coeffs[0]))];
        }
        let nf = n as f64;
        let big = len + n;
        let lnv = self.profile.ln_v_jet(xi, big);
        let phi = lnv.scale(-2.0 / nf).exp();
        let psi = lnv.scale(1.0 - 1.0 / nf).exp();
        let w = lnv.scale(1.0 + 1.0 / nf).exp();
        let mut dphi = vec![phi];
        let mut dpsi = vec![psi];
        for _ in 0..n {
            dphi.push(dphi.last().unwrap().diff());
            dpsi.push(dpsi.last().unwrap().diff());
        }
        let mut out = Vec::with_capacity(n + 1);
        for l in 0..=n {
            let mut acc = CJet::zero(len);
            for m in l..=n {
                let qm = self.q.coeffs[m];
                if qm == 0.0 {
                    continue;
                }
                let mut inner = Jet::zero(len);
                for j in l..=m {
                    let tau = if j == 0 {
                        Jet::constant(1.0, len)
                    } else if l == 0 {
                        continue;
                    } else {
                        self.tau.eval_jet(j, l, &dphi, len)
                    };
                    inner = inner + (dpsi[m - j].truncate(len) * tau).scale(binom(m, j));
                }
                acc = acc + to_complex(&inner).scale(i_pow(l as i64 - m as i64) * qm);
            }
            out.push(acc * to_complex(&w.truncate(len)));
        }
        out
    }

    /// Jets in `x` of `b_0, …, b_n` at `x`.
    pub fn b_jets(&self, x: f64, len: usize) -> Result<Vec<CJet>> {
        let (xi, dxi) = match &self.cov {
            Some(c) => {
                let j = c.xi_jet(x, len)?;
                (j.value(), j - Jet::constant(j.value(), len))
            }
            None => (x, Jet::variable(0.0, len)),
        };
        let inner = to_complex(&dxi);
        Ok(self.b_xi_jets(xi, len).iter().map(|b| b.compose(&inner)).collect())
    }

    /// `b_0(x), …, b_n(x)`.
    pub fn b_coefficients(&self, x: f64) -> Result<Vec<Complex64>> {
        let xi = self.xi_of_x(x)?;
        Ok(self.b_xi_jets(xi, 1).iter().map(|j| j.value()).collect())
    }

    /// `β(x) = −q_{n−1} ξ(x) / n`.
    pub fn gauge_beta(&self, x: f64) -> Result<f64> {
        let n = self.n();
        if n == 0 {
            return Ok(0.0);
        }
        Ok(-self.q.coeffs[n - 1] * self.xi_of_x(x)? / n as f64)
    }

    /// Jets of `b̃_0, …, b̃_n` at `x` with `len` coefficients.
    pub fn gauged_jets(&self, x: f64, len: usize) -> Result<Vec<CJet>> {
        let n = self.n();
        if n == 0 {
            return self.b_jets(x, len);
        }
        let big = len + n;
        let b = self.b_jets(x, big)?;
        let xi = self.cov.as_ref().unwrap().xi_jet(x, big + 1)?;
        let u = xi.diff().scale(-self.q.coeffs[n - 1] / n as f64);
        let mut g = conjugate_by_gauge(&b, &u);
        g[n] = CJet::constant(Complex64::new(1.0, 0.0), len);
        Ok(g)
    }

    /// `b̃_0(x), …, b̃_n(x)`.
    pub fn gauged_coefficients(&self, x: f64) -> Result<Vec<Complex64>> {
        Ok(self.gauged_jets(x, 1)?.iter().map(|j| j.value()).collect())
    }

    /// Max over `xi_grid` of `|v Σ q_m D^m(ψ f(x(ξ))) − v^{−1/n} Σ i^{−m} b_m f^{(m)}|`.
    /// The left side uses Richardson-extrapolated central differences in `ξ`.
    pub fn operator_apply_check(&self, f: TestFunction, xi_grid: &[f64]) -> Result<f64> {
        let n = self.n();
        let cov = match &self.cov {
            Some(c) => c,
            None => {
                // A = q₀ v², B = q₀ v² with x = ξ
                let mut worst: f64 = 0.0;
                for &s in xi_grid {
                    let v = self.profile.v(s);
                    let lhs = self.q.coeffs[0] * v * v * f.value(s);
                    let rhs = self.b_coefficients(s)?[0].re * f.value(s);
                    worst = worst.max((lhs - rhs).abs());
                }
                return Ok(worst);
            }
        };
        let mut worst: f64 = 0.0;
        for &s in xi_grid {
            let g = |t: f64| cov.psi(t) * f.value(cov.x_of_xi(t).unwrap());
            let v = self.profile.v(s);
            let mut lhs = Complex64::new(0.0, 0.0);
            for m in 0..=n {
                let dm = richardson_derivative(&g, s, m, 0.08);
                lhs += i_pow(-(m as i64)) * self.q.coeffs[m] * dm;
            }
            lhs *= v;
            let x = cov.x_of_xi(s)?;
            let b = self.b_coefficients(x)?;
            let fj = f.jet(x, n + 1);
            let mut rhs = Complex64::new(0.0, 0.0);
            for (m, bm) in b.iter().enumerate() {
                rhs += i_pow(-(m as i64)) * bm * fj.derivative_at(m);
            }
            rhs *= v.powf(-1.0 / n as f64);
            worst = worst.max((lhs - rhs).norm());
        }
        Ok(worst)
    }

    /// Max over `x_grid` of `|(B − 𝒥 B̃ 𝒥*) f|`, with `𝒥 = e^{iβ}` and the
    /// derivatives of `e^{−iβ} f` taken by finite differences.
    pub fn gauge_identity_check(&self, f: TestFunction, x_grid: &[f64]) -> Result<f64> {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for &x in x_grid {
            let b = self.b_coefficients(x)?;
            let bt = self.gauged_coefficients(x)?;
            let fj = f.jet(x, n + 1);
            let mut lhs = Complex64::new(0.0, 0.0);
            for (m, bm) in b.iter().enumerate() {
                lhs += bm * i_pow(-(m as i64)) * fj.derivative_at(m);
            }
            let re = |t: f64| (-self.gauge_beta(t).unwrap()).cos() * f.value(t);
            let im = |t: f64| (-self.gauge_beta(t).unwrap()).sin() * f.value(t);
            let mut inner = Complex64::new(0.0, 0.0);
            for (m, bm) in bt.iter().enumerate() {
                let d = Complex64::new(richardson_derivative(&re, x, m, 0.08), richardson_derivative(&im, x, m, 0.08));
                inner += bm * i_pow(-(m as i64)) * d;
            }
            let rhs = Complex64::from_polar(1.0, self.gauge_beta(x)?) * inner;
            worst = worst.max((lhs - rhs).norm());
        }
        Ok(worst)
    }

    /// Log-log slopes of `|b_m^{(p)}(x)|` over `x ∈ [x_lo, x_hi]`.
    pub fn decay_report(&self, p_max: usize, x_lo: f64, x_hi: f64, gauged: bool) -> Result<DecayReport> {
        let n = self.n();
        let (gamma, delta) = nominal_decay(&self.profile, self.cov.as_ref());
        let pts = 40;
        let xs: Vec<f64> = (0..pts)
            .map(|i| (x_lo.ln() + (x_hi / x_lo).ln() * i as f64 / (pts - 1) as f64).exp())
            .collect();
        let mut samples: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(pts); p_max + 1]; n];
        for &x in &xs {
            let jets = if gauged { self.gauged_jets(x, p_max + 1)? } else { self.b_jets(x, p_max + 1)? };
            for m in 0..n {
                for p in 0..=p_max {
                    samples[m][p].push(jets[m].derivative_at(p).norm());
                }
            }
        }
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let mut entries = Vec::new();
        for m in 0..n {
            for p in 0..=p_max {
                let ys = &samples[m][p];
                if ys.iter().any(|y| *y == 0.0 || !y.is_finite()) {
                    continue;
                }
                let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
                let (slope, _) = linear_fit(&lx, &ly);
                let expected = -((n - m) as f64) * gamma - p as f64 * gamma * (1.0 + delta * n as f64 / 2.0);
                entries.push(DecayEntry { m, p, slope, expected });
            }
        }
        Ok(DecayReport { gamma, delta, entries })
    }
}

/// `(γ, δ)` known in closed form for the built-in families, fitted otherwise.
pub fn nominal_decay(profile: &WeightProfile<f64>, cov: Option<&ChangeOfVariables<f64>>) -> (f64, f64) {
    let n = profile.n as f64;
    match profile.family {
        Family::Cosh => (1.0, 0.0),
        Family::PowerLaw { alpha } => (2.0 * alpha / (2.0 * alpha + n), 1.0 / alpha),
        Family::StretchedExp { alpha, .. } if alpha == 1.0 => (1.0, 0.0),
        _ => match cov {
            Some(c) => profile.decay_parameters(c),
            None => (1.0, 0.0),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    pub m: usize,
    pub p: usize,
    pub slope: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub gamma: f64,
    pub delta: f64,
    pub entries: Vec<DecayEntry>,
}

impl DecayReport {
    pub fn get(&self, m: usize, p: usize) -> Option<&DecayEntry> {
        self.entries.iter().find(|e| e.m == m && e.p == p)
    }
}

/// `m`-th derivative by central differences with two Richardson steps.
pub fn richardson_derivative(g: &impl Fn(f64) -> f64, x: f64, m: usize, h: f64) -> f64 {
    if m == 0 {
        return g(x);
    }
    let d = |h: f64| -> f64 {
        let mut s = 0.0;
        for k in 0..=m {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * binom(m, k) * g(x + (m as f64 / 2.0 - k as f64) * h);
        }
        s / h.powi(m as i32)
    };
    let (d0, d1, d2, d3) = (d(h), d(h / 2.0), d(h / 4.0), d(h / 8.0));
    let r1 = [(4.0 * d1 - d0) / 3.0, (4.0 * d2 - d1) / 3.0, (4.0 * d3 - d2) / 3.0];
    let r2 = [(16.0 * r1[1] - r1[0]) / 15.0, (16.0 * r1[2] - r1[1]) / 15.0];
    (64.0 * r2[1] - r2[0]) / 63.0
}
