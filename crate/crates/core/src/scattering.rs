//! Free resolvent of `Dⁿ`, Lippmann–Schwinger solves for the gauged operator
//! `B̃ = Dⁿ + Σ_{m ≤ n−2} b̃_m Dᵐ`, and scattering data.
//!
//! The resolvent kernel is a finite sum of exponentials `e^{iζ(x−y)}`, so the
//! Nyström operator is semi-separable: the integrals
//! `F_ζ(x) = ∫_{−X}^x e^{iζ(x−y)} w` and `G_ζ(x) = ∫_x^X e^{iζ(x−y)} w`
//! are computed by stable one-pass recursions. The discrete system is solved
//! by GMRES, right-preconditioned with a dense LU of the core block; the same
//! block supplies the condition estimate used to flag near-exceptional
//! energies.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::liouville::OperatorCoefficients;
use crate::quad::gauss_legendre;

const I: C = C { re: 0.0, im: 1.0 };

/// Which boundary value `λ ± i0` is taken for real spectral parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Upper,
    Lower,
}

/// Roots of `ζⁿ = z`.
#[derive(Debug, Clone, Serialize)]
pub struct RootSet {
    pub z: C,
    pub n: usize,
    /// Counterclockwise from the principal root.
    pub roots: Vec<C>,
    /// Indices with `Im ζ > 0`.
    pub upper: Vec<usize>,
    /// Indices with `Im ζ < 0`.
    pub lower: Vec<usize>,
    /// Indices of real roots (only for real `z`).
    pub real: Vec<usize>,
    /// For each real root, whether the `±i0` limit moves it into the upper half plane.
    pub real_moves_up: Vec<bool>,
}

impl RootSet {
    /// Roots entering the `x ≥ y` branch of the kernel.
    pub fn kernel_upper(&self) -> Vec<usize> {
        let mut v = self.upper.clone();
        for (r, &up) in self.real.iter().zip(&self.real_moves_up) {
            if up {
                v.push(*r);
            }
        }
        v.sort_unstable();
        v
    }

    /// Roots entering the `x ≤ y` branch of the kernel.
    pub fn kernel_lower(&self) -> Vec<usize> {
        let mut v = self.lower.clone();
        for (r, &up) in self.real.iter().zip(&self.real_moves_up) {
            if !up {
                v.push(*r);
            }
        }
        v.sort_unstable();
        v
    }
}

/// Roots of `ζⁿ = z`, with real roots of real `z` resolved by the `z ± i0` limit.
pub fn zeta_roots(z: C, n: usize, side: Side) -> Result<RootSet> {
    if n == 0 {
        return Err(Error::Config("root set needs n >= 1".into()));
    }
    if z.norm() == 0.0 {
        return Err(Error::DegenerateSpectralPoint("zeta^n = 0 has a single degenerate root".into()));
    }
    let r = z.norm().powf(1.0 / n as f64);
    let theta = z.arg();
    let is_real = z.im == 0.0;
    let mut set = RootSet {
        z,
        n,
        roots: Vec::with_capacity(n),
        upper: vec![],
        lower: vec![],
        real: vec![],
        real_moves_up: vec![],
    };
    for j in 0..n {
        let ang = (theta + 2.0 * std::f64::consts::PI * j as f64) / n as f64;
        let mut zeta = C::from_polar(r, ang);
        if is_real && ang.sin().abs() < 1e-12 {
            zeta = C::new(r * ang.cos().signum(), 0.0);
            // ζ + iε/(nζ^{n−1}): the sign of ζ^{n−1} decides the direction
            let lead_pos = zeta.re > 0.0 || (n - 1) % 2 == 0;
            set.real.push(j);
            set.real_moves_up.push(lead_pos == (side == Side::Upper));
        } else if zeta.im > 0.0 {
            set.upper.push(j);
        } else {
            set.lower.push(j);
        }
        set.roots.push(zeta);
    }
    Ok(set)
}

/// `D_x^p R₀(x, y; z)` for `R₀ = (Dⁿ − z)⁻¹`, `D = −i d/dx`. For `p ≤ n − 2` the
/// kernel is continuous across `x = y`.
pub fn free_resolvent_kernel_dx(x: f64, y: f64, z: C, n: usize, side: Side, p: usize) -> Result<C> {
    let rs = zeta_roots(z, n, side)?;
    let nf = n as f64;
    let d = x - y;
    let term = |j: usize| {
        let zeta = rs.roots[j];
        zeta.powi(1 - n as i32 + p as i32) * (I * zeta * d).exp()
    };
    let s = if d >= 0.0 {
        rs.kernel_upper().into_iter().map(term).sum::<C>() * I / nf
    } else {
        -rs.kernel_lower().into_iter().map(term).sum::<C>() * I / nf
    };
    Ok(s)
}

/// Integral kernel of `(Dⁿ − z)⁻¹`.
pub fn free_resolvent_kernel(x: f64, y: f64, z: C, n: usize, side: Side) -> Result<C> {
    free_resolvent_kernel_dx(x, y, z, n, side, 0)
}

/// Upper bound for the multiplicity of the spectrum: the number of roots of
/// `ζⁿ = sign(λ)` strictly in the upper half plane.
pub fn eigenvalue_multiplicity_bound(n: usize, lambda_sign: f64) -> Result<usize> {
    let z = C::new(if lambda_sign >= 0.0 { 1.0 } else { -1.0 }, 0.0);
    Ok(zeta_roots(z, n, Side::Upper)?.upper.len())
}

/// Nodes of the Nyström discretization on `[−X, X]`.
#[derive(Debug, Clone, Serialize)]
pub struct Mesh {
    pub x: Vec<f64>,
}

/// Step at the origin and its growth rate in `|x|`.
const H0: f64 = 0.01;
const GRADE: f64 = 0.06;

impl Mesh {
    /// Symmetric mesh with step `min(h_max, H0 + GRADE·|x|)`.
    pub fn graded(x_max: f64, h_max: f64) -> Result<Self> {
        Self::graded_with(x_max, h_max, H0, GRADE)
    }

    /// Symmetric mesh with step `min(h_max, h0 + grade·|x|)`.
    pub fn graded_with(x_max: f64, h_max: f64, h0: f64, grade: f64) -> Result<Self> {
        if !(x_max > 0.0) || !(h_max > 0.0) || !(h0 > 0.0) {
            return Err(Error::Config("mesh needs positive radius and steps".into()));
        }
        let mut half = vec![0.0];
        let mut x = 0.0;
        loop {
            let h = h_max.min(h0 + grade * x);
            if x + h >= x_max {
                if x_max - x < 0.3 * h && half.len() > 1 {
                    half.pop();
                }
                half.push(x_max);
                break;
            }
            x += h;
            half.push(x);
        }
        let mut nodes: Vec<f64> = half.iter().skip(1).rev().map(|v| -v).collect();
        nodes.extend_from_slice(&half);
        Ok(Self { x: nodes })
    }

    pub fn uniform(x_max: f64, h: f64) -> Result<Self> {
        let cells = ((2.0 * x_max / h).ceil() as usize).max(3);
        let step = 2.0 * x_max / cells as f64;
        Ok(Self { x: (0..=cells).map(|i| -x_max + i as f64 * step).collect() })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn radius(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// First node of the 4-point interpolation stencil for cell `i` (`x_{i−1}..x_i`).
    fn stencil(&self, i: usize) -> usize {
        i.saturating_sub(2).min(self.len() - 4)
    }
}

/// Lagrange basis values of a 4-point stencil at `y`.
fn lagrange4(t: &[f64], y: f64) -> [f64; 4] {
    let mut l = [1.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                l[a] *= (y - t[b]) / (t[a] - t[b]);
            }
        }
    }
    l
}

/// Cubic interpolation of mesh values at `y` (clamped to the end cells).
pub fn interpolate_on(x: &[f64], values: &[C], y: f64) -> C {
    let len = x.len();
    let i = x.partition_point(|&v| v < y).clamp(1, len - 1);
    let s = i.saturating_sub(2).min(len - 4);
    let l = lagrange4(&x[s..s + 4], y);
    (0..4).map(|q| values[s + q] * l[q]).sum()
}

/// Discretized Lippmann–Schwinger problem: mesh plus tabulated `b̃_m`, `m ≤ n − 2`.
#[derive(Debug, Clone)]
pub struct LsProblem {
    n: usize,
    mesh: Mesh,
    coeffs: Vec<Vec<C>>,
    coupling: f64,
}

/// Half-width of the block used for preconditioning and the condition estimate.
pub const CORE_RADIUS: f64 = 20.0;
const CORE_MAX_NODES: usize = 320;
/// Condition number of the core block above which the energy is treated as exceptional.
pub const COND_LIMIT: f64 = 1e10;
/// Required relative residual of the discrete equation.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

impl LsProblem {
    /// Tabulate the gauged coefficients of `op` on `mesh`.
    pub fn new(op: &OperatorCoefficients, mesh: Mesh) -> Result<Self> {
        let n = op.n();
        if n == 0 {
            return Err(Error::Config("scattering needs n >= 1".into()));
        }
        if mesh.len() < 4 {
            return Err(Error::Config("mesh needs at least 4 nodes".into()));
        }
        let rows: Vec<Vec<C>> = mesh
            .x
            .par_iter()
            .map(|&x| op.gauged_coefficients(x).map(|b| b[..n.saturating_sub(1)].to_vec()))
            .collect::<Result<_>>()?;
        let m_count = n.saturating_sub(1);
        let coeffs = (0..m_count).map(|m| rows.iter().map(|r| r[m]).collect()).collect();
        Ok(Self { n, mesh, coeffs, coupling: 1.0 })
    }

    /// Problem with explicit coefficients `coeffs[m][i] = b̃_m(x_i)`, `m ≤ n − 2`.
    pub fn from_table(n: usize, mesh: Mesh, coeffs: Vec<Vec<C>>) -> Result<Self> {
        if n == 0 || coeffs.len() != n.saturating_sub(1) || coeffs.iter().any(|c| c.len() != mesh.len()) {
            return Err(Error::Config("coefficient table does not match order and mesh".into()));
        }
        if mesh.len() < 4 {
            return Err(Error::Config("mesh needs at least 4 nodes".into()));
        }
        Ok(Self { n, mesh, coeffs, coupling: 1.0 })
    }

    /// Scale all perturbation coefficients by `eps`.
    pub fn with_coupling(mut self, eps: f64) -> Self {
        self.coupling = eps;
        self
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `ψ̃ = ψ₀ − R₀(kⁿ + i0) Ṽ ψ̃` with `ψ₀ = e^{ikx}`.
    pub fn solve(&self, k: f64) -> Result<EigenfunctionField> {
        let n = self.n;
        if k == 0.0 || !k.is_finite() {
            return Err(Error::DegenerateSpectralPoint("k = 0 (lambda = 0) is a threshold".into()));
        }
        let lambda = k.powi(n as i32);
        let roots = zeta_roots(C::new(lambda, 0.0), n, Side::Upper)?;
        let mut roots = roots;
        // pin the real roots to ±k exactly
        for &j in &roots.real {
            roots.roots[j] = C::new(k.abs() * roots.roots[j].re.signum(), 0.0);
        }
        let sweep = Sweep::new(self, &roots, k);
        let x = &self.mesh.x;
        let rhs: Vec<C> = (0..x.len())
            .map(|i| {
                let e = (I * k * x[i]).exp();
                let mut s = C::new(0.0, 0.0);
                for (m, row) in self.coeffs.iter().enumerate() {
                    s += row[i] * k.powi(m as i32) * e;
                }
                s * self.coupling
            })
            .collect();

        let core = sweep.core_block()?;
        let cond = core.cond;
        if cond > COND_LIMIT {
            return Err(Error::NearExceptional { lambda, cond });
        }
        let apply = |v: &[C], out: &mut [C]| sweep.apply(v, out);
        let prec = |v: &mut [C]| core.solve_in_place(v);
        let (w, iterations, _) = gmres(&apply, &prec, &rhs, 1e-12, 40, 600);
        let mut aw = vec![C::new(0.0, 0.0); w.len()];
        sweep.apply(&w, &mut aw);
        let bnorm = rhs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let residual = if bnorm == 0.0 {
            0.0
        } else {
            aw.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / bnorm
        };
        if residual > RESIDUAL_LIMIT {
            return Err(Error::Convergence(format!(
                "Lippmann-Schwinger residual {residual:.2e} after {iterations} iterations"
            )));
        }

        let (fwd, bwd) = sweep.integrals(&w);
        let nf = n as f64;
        let mut derivatives = vec![vec![C::new(0.0, 0.0); x.len()]; n];
        for (p, d) in derivatives.iter_mut().enumerate() {
            for (i, di) in d.iter_mut().enumerate() {
                let mut s = k.powi(p as i32) * (I * k * x[i]).exp();
                for (j, &r) in sweep.up.iter().enumerate() {
                    let z = roots.roots[r];
                    s -= I / nf * z.powi(1 - n as i32 + p as i32) * fwd[j][i];
                }
                for (j, &r) in sweep.lo.iter().enumerate() {
                    let z = roots.roots[r];
                    s += I / nf * z.powi(1 - n as i32 + p as i32) * bwd[j][i];
                }
                *di = s;
            }
        }
        Ok(EigenfunctionField {
            k,
            n,
            x: x.clone(),
            derivatives,
            w,
            up: sweep.up.clone(),
            lo: sweep.lo.clone(),
            roots,
            forward: fwd,
            backward: bwd,
            residual,
            iterations,
            condition: cond,
        })
    }
}

/// Per-solve Filon weights of the recursions.
struct Sweep<'a> {
    prob: &'a LsProblem,
    up: Vec<usize>,
    lo: Vec<usize>,
    /// Per root: propagator per cell and the 4 weights per cell.
    fwd: Vec<(Vec<C>, Vec<[C; 4]>)>,
    bwd: Vec<(Vec<C>, Vec<[C; 4]>)>,
    /// `± (i/n) Σ_m b̃_m ζ^{1−n+m}` per root and node.
    cu: Vec<Vec<C>>,
    cl: Vec<Vec<C>>,
}

impl<'a> Sweep<'a> {
    fn new(prob: &'a LsProblem, roots: &RootSet, _k: f64) -> Self {
        let n = prob.n;
        let nf = n as f64;
        let x = &prob.mesh.x;
        let up = roots.kernel_upper();
        let lo = roots.kernel_lower();
        let (gx, gw) = gauss_legendre(8);
        let cells = x.len();
        let weights = |zeta: C, forward: bool| {
            let mut prop = vec![C::new(0.0, 0.0); cells];
            let mut wts = vec![[C::new(0.0, 0.0); 4]; cells];
            for i in 1..cells {
                let (a, b) = (x[i - 1], x[i]);
                let h = b - a;
                let s = prob.mesh.stencil(i);
                let t = &x[s..s + 4];
                let anchor = if forward { b } else { a };
                let mut acc = [C::new(0.0, 0.0); 4];
                for (g, gwt) in gx.iter().zip(&gw) {
                    let y = 0.5 * (a + b) + 0.5 * h * g;
                    let l = lagrange4(t, y);
                    let e = (I * zeta * (anchor - y)).exp() * (0.5 * h * gwt);
                    for q in 0..4 {
                        acc[q] += e * l[q];
                    }
                }
                wts[i] = acc;
                prop[i] = if forward { (I * zeta * h).exp() } else { (-I * zeta * h).exp() };
            }
            (prop, wts)
        };
        let fwd = up.iter().map(|&r| weights(roots.roots[r], true)).collect();
        let bwd = lo.iter().map(|&r| weights(roots.roots[r], false)).collect();
        let comb = |r: usize, sign: f64| -> Vec<C> {
            let z = roots.roots[r];
            (0..x.len())
                .map(|i| {
                    let mut s = C::new(0.0, 0.0);
                    for (m, row) in prob.coeffs.iter().enumerate() {
                        s += row[i] * z.powi(1 - n as i32 + m as i32);
                    }
                    s * (sign * prob.coupling / nf) * I
                })
                .collect()
        };
        let cu = up.iter().map(|&r| comb(r, 1.0)).collect();
        let cl = lo.iter().map(|&r| comb(r, -1.0)).collect();
        Self { prob, up, lo, fwd, bwd, cu, cl }
    }

    /// Forward and backward integrals of `w` for every kernel root.
    fn integrals(&self, w: &[C]) -> (Vec<Vec<C>>, Vec<Vec<C>>) {
        let len = w.len();
        let mesh = &self.prob.mesh;
        let f = self
            .fwd
            .iter()
            .map(|(p, wt)| {
                let mut out = vec![C::new(0.0, 0.0); len];
                for i in 1..len {
                    let s = mesh.stencil(i);
                    let c = &wt[i];
                    out[i] = p[i] * out[i - 1] + c[0] * w[s] + c[1] * w[s + 1] + c[2] * w[s + 2] + c[3] * w[s + 3];
                }
                out
            })
            .collect();
        let g = self
            .bwd
            .iter()
            .map(|(p, wt)| {
                let mut out = vec![C::new(0.0, 0.0); len];
                for i in (1..len).rev() {
                    let s = mesh.stencil(i);
                    let c = &wt[i];
                    out[i - 1] = p[i] * out[i] + c[0] * w[s] + c[1] * w[s + 1] + c[2] * w[s + 2] + c[3] * w[s + 3];
                }
                out
            })
            .collect();
        (f, g)
    }

    /// `out = (I + K) w`, where `K w = −Σ_m b̃_m D^m(ψ_scat[w])`.
    fn apply(&self, w: &[C], out: &mut [C]) {
        out.copy_from_slice(w);
        let len = w.len();
        let mesh = &self.prob.mesh;
        for ((p, wt), cu) in self.fwd.iter().zip(&self.cu) {
            let mut acc = C::new(0.0, 0.0);
            for i in 1..len {
                let s = mesh.stencil(i);
                let c = &wt[i];
                acc = p[i] * acc + c[0] * w[s] + c[1] * w[s + 1] + c[2] * w[s + 2] + c[3] * w[s + 3];
                out[i] += cu[i] * acc;
            }
        }
        for ((p, wt), cl) in self.bwd.iter().zip(&self.cl) {
            let mut acc = C::new(0.0, 0.0);
            for i in (1..len).rev() {
                let s = mesh.stencil(i);
                let c = &wt[i];
                acc = p[i] * acc + c[0] * w[s] + c[1] * w[s + 1] + c[2] * w[s + 2] + c[3] * w[s + 3];
                out[i - 1] += cl[i - 1] * acc;
            }
        }
    }

    /// Dense block of `I + K` restricted to the core nodes.
    fn core_block(&self) -> Result<CoreBlock> {
        let x = &self.prob.mesh.x;
        let mut lo = x.partition_point(|&v| v < -CORE_RADIUS);
        let mut hi = x.partition_point(|&v| v <= CORE_RADIUS);
        while hi - lo > CORE_MAX_NODES {
            lo += 1;
            hi -= 1;
        }
        let m = hi - lo;
        let len = x.len();
        let mut a = DMatrix::<C>::zeros(m, m);
        let mut unit = vec![C::new(0.0, 0.0); len];
        let mut col = vec![C::new(0.0, 0.0); len];
        let mesh = &self.prob.mesh;
        for l in 0..m {
            unit[lo + l] = C::new(1.0, 0.0);
            col[lo..hi].iter_mut().for_each(|c| *c = C::new(0.0, 0.0));
            col[lo + l] = C::new(1.0, 0.0);
            // only cells whose stencil touches node lo + l contribute before decay
            for ((p, wt), cu) in self.fwd.iter().zip(&self.cu) {
                let mut acc = C::new(0.0, 0.0);
                for i in (lo + 1)..hi {
                    let s = mesh.stencil(i);
                    let c = &wt[i];
                    acc = p[i] * acc
                        + c[0] * unit[s]
                        + c[1] * unit[s + 1]
                        + c[2] * unit[s + 2]
                        + c[3] * unit[s + 3];
                    col[i] += cu[i] * acc;
                }
            }
            for ((p, wt), cl) in self.bwd.iter().zip(&self.cl) {
                let mut acc = C::new(0.0, 0.0);
                for i in ((lo + 1)..hi).rev() {
                    let s = mesh.stencil(i);
                    let c = &wt[i];
                    acc = p[i] * acc
                        + c[0] * unit[s]
                        + c[1] * unit[s + 1]
                        + c[2] * unit[s + 2]
                        + c[3] * unit[s + 3];
                    col[i - 1] += cl[i - 1] * acc;
                }
            }
            for r in 0..m {
                a[(r, l)] = col[lo + r];
            }
            unit[lo + l] = C::new(0.0, 0.0);
        }
        let norm1 = |mat: &DMatrix<C>| {
            (0..mat.ncols()).map(|j| mat.column(j).iter().map(|c| c.norm()).sum::<f64>()).fold(0.0, f64::max)
        };
        let anorm = norm1(&a);
        let lu = a.lu();
        let cond = match lu.try_inverse() {
            Some(inv) => anorm * norm1(&inv),
            None => f64::INFINITY,
        };
        Ok(CoreBlock { lo, lu, cond })
    }
}

struct CoreBlock {
    lo: usize,
    lu: nalgebra::LU<C, nalgebra::Dyn, nalgebra::Dyn>,
    cond: f64,
}

impl CoreBlock {
    fn solve_in_place(&self, v: &mut [C]) {
        if !self.cond.is_finite() {
            return;
        }
        let m = self.lu.l().nrows();
        let rhs = DVector::from_column_slice(&v[self.lo..self.lo + m]);
        if let Some(sol) = self.lu.solve(&rhs) {
            v[self.lo..self.lo + m].copy_from_slice(sol.as_slice());
        }
    }
}

fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[C]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES with right preconditioning. Returns the solution, the
/// number of inner iterations and the final relative residual estimate.
fn gmres(
    apply: &dyn Fn(&[C], &mut [C]),
    prec: &dyn Fn(&mut [C]),
    b: &[C],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<C>, usize, f64) {
    let len = b.len();
    let zero = C::new(0.0, 0.0);
    let mut x = vec![zero; len];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return (x, 0, 0.0);
    }
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut total = 0;
    let mut tmp = vec![zero; len];
    loop {
        let mut v: Vec<Vec<C>> = vec![r.iter().map(|c| c / beta).collect()];
        let mut h = vec![vec![zero; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![zero; restart];
        let mut g = vec![zero; restart + 1];
        g[0] = C::new(beta, 0.0);
        let mut used = 0;
        for j in 0..restart {
            let mut z = v[j].clone();
            prec(&mut z);
            apply(&z, &mut tmp);
            let mut wv = tmp.clone();
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(vi, &wv);
                h[i][j] = hij;
                wv.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
            }
            let hn = norm2(&wv);
            h[j + 1][j] = C::new(hn, 0.0);
            for i in 0..j {
                let (a, bb) = (h[i][j], h[i + 1][j]);
                h[i][j] = cs[i] * a + sn[i] * bb;
                h[i + 1][j] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let rho = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if a.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = C::new(1.0, 0.0);
            } else {
                cs[j] = a.norm() / rho;
                sn[j] = a / a.norm() * bb.conj() / rho;
            }
            h[j][j] = cs[j] * a + sn[j] * bb;
            h[j + 1][j] = zero;
            g[j + 1] = -sn[j].conj() * g[j];
            g[j] = cs[j] * g[j];
            used = j + 1;
            total += 1;
            if hn > 0.0 {
                v.push(wv.iter().map(|c| c / hn).collect());
            }
            if g[j + 1].norm() / bnorm < tol || hn == 0.0 || total >= max_iter {
                break;
            }
        }
        let mut y = vec![zero; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in (i + 1)..used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        let mut u = vec![zero; len];
        for (yi, vi) in y.iter().zip(&v) {
            u.iter_mut().zip(vi).for_each(|(a, b)| *a += yi * b);
        }
        prec(&mut u);
        x.iter_mut().zip(&u).for_each(|(a, b)| *a += b);
        apply(&x, &mut tmp);
        r.iter_mut().zip(b.iter().zip(&tmp)).for_each(|(ri, (bi, ti))| *ri = bi - ti);
        beta = norm2(&r);
        if beta / bnorm < tol || total >= max_iter {
            return (x, total, beta / bnorm);
        }
    }
}

/// Solution of the Lippmann–Schwinger equation at one `k`.
#[derive(Debug, Clone)]
pub struct EigenfunctionField {
    pub k: f64,
    pub n: usize,
    pub x: Vec<f64>,
    /// `D^p ψ̃` on the mesh for `p = 0..n−1`.
    pub derivatives: Vec<Vec<C>>,
    /// `w = Ṽψ̃`.
    pub w: Vec<C>,
    pub roots: RootSet,
    up: Vec<usize>,
    lo: Vec<usize>,
    forward: Vec<Vec<C>>,
    backward: Vec<Vec<C>>,
    /// Max-norm relative residual of the discrete equation.
    pub residual: f64,
    pub iterations: usize,
    /// 1-norm condition number of the core block.
    pub condition: f64,
}

impl EigenfunctionField {
    pub fn psi(&self) -> &[C] {
        &self.derivatives[0]
    }

    /// Amplitude `a_κ(x_i)` of the oscillating mode `e^{iκx}` (`κ = ±k`), i.e. `r`, `r₊` or `r₋`.
    fn amplitude(&self, kappa: f64) -> Option<Vec<C>> {
        let nf = self.n as f64;
        let delta = if kappa == self.k { 1.0 } else { 0.0 };
        let pre = C::new(kappa, 0.0).powi(1 - self.n as i32) * I / nf;
        let find = |list: &[usize]| list.iter().position(|&r| self.roots.roots[r] == C::new(kappa, 0.0));
        if let Some(j) = find(&self.up) {
            return Some(
                self.x
                    .iter()
                    .zip(&self.forward[j])
                    .map(|(&x, f)| delta - pre * (-I * kappa * x).exp() * f)
                    .collect(),
            );
        }
        find(&self.lo).map(|j| {
            self.x
                .iter()
                .zip(&self.backward[j])
                .map(|(&x, g)| delta + pre * (-I * kappa * x).exp() * g)
                .collect()
        })
    }

    /// Sum of the exponentially decaying terms (non-real roots).
    pub fn psi_dec(&self) -> Vec<C> {
        let nf = self.n as f64;
        let n = self.n as i32;
        let mut out = vec![C::new(0.0, 0.0); self.x.len()];
        for (j, &r) in self.up.iter().enumerate() {
            let z = self.roots.roots[r];
            if z.im != 0.0 {
                let c = I / nf * z.powi(1 - n);
                out.iter_mut().zip(&self.forward[j]).for_each(|(o, f)| *o -= c * f);
            }
        }
        for (j, &r) in self.lo.iter().enumerate() {
            let z = self.roots.roots[r];
            if z.im != 0.0 {
                let c = I / nf * z.powi(1 - n);
                out.iter_mut().zip(&self.backward[j]).for_each(|(o, g)| *o += c * g);
            }
        }
        out
    }

    /// Oscillating part `e^{ikx} r` (odd n) or `e^{ikx} r₊ + e^{−ikx} r₋` (even n).
    pub fn psi_osc(&self) -> Vec<C> {
        let r = r_functions(self);
        let mut out: Vec<C> =
            self.x.iter().zip(&r.plus).map(|(&x, a)| a * (I * self.k * x).exp()).collect();
        if let Some(m) = &r.minus {
            out.iter_mut().zip(self.x.iter().zip(m)).for_each(|(o, (&x, a))| *o += a * (-I * self.k * x).exp());
        }
        out
    }

    /// `ψ̃` at an arbitrary point by 4-point interpolation; outside the mesh
    /// the oscillating asymptotics with the boundary amplitudes are used.
    pub fn psi_at(&self, x: f64) -> C {
        let len = self.x.len();
        let (a, b) = (self.x[0], self.x[len - 1]);
        if x < a || x > b {
            let r = r_functions(self);
            let (p, m) = if x > b { (r.plus_limits.1, r.minus_limits.map(|l| l.1)) } else { (r.plus_limits.0, r.minus_limits.map(|l| l.0)) };
            let mut v = p * (I * self.k * x).exp();
            if let Some(m) = m {
                v += m * (-I * self.k * x).exp();
            }
            return v;
        }
        interpolate_on(&self.x, &self.derivatives[0], x)
    }
}

/// `r` (odd n) or `r₊`, `r₋` (even n) on the mesh, with limits `(−∞, +∞)`
/// taken at the truncation radius.
#[derive(Debug, Clone)]
pub struct RFunctions {
    pub k: f64,
    pub plus: Vec<C>,
    pub minus: Option<Vec<C>>,
    pub plus_limits: (C, C),
    pub minus_limits: Option<(C, C)>,
}

pub fn r_functions(field: &EigenfunctionField) -> RFunctions {
    let k = field.k;
    let plus = field.amplitude(k).expect("k is always a root");
    let minus = if field.n % 2 == 0 { field.amplitude(-k) } else { None };
    let ends = |v: &Vec<C>| (v[0], *v.last().unwrap());
    RFunctions {
        k,
        plus_limits: ends(&plus),
        minus_limits: minus.as_ref().map(ends),
        plus,
        minus,
    }
}

/// Scattering coefficients at one λ from a single truncation radius.
/// Odd n: `[s]`; even n: `[s11, s12, s21, s22]`.
pub fn scattering_from_fields(n: usize, plus_k: &EigenfunctionField, minus_k: Option<&EigenfunctionField>) -> Vec<C> {
    let rp = r_functions(plus_k);
    if n % 2 == 1 {
        return vec![rp.plus_limits.1];
    }
    let rm = r_functions(minus_k.expect("even n needs both signs of k"));
    let s11 = rp.plus_limits.1;
    let s21 = rp.minus_limits.unwrap().0;
    let s12 = rm.minus_limits.unwrap().1;
    let s22 = rm.plus_limits.0;
    vec![s11, s12, s21, s22]
}

/// `||s| − 1|` or the spectral norm of `S*S − I`.
pub fn unitarity_defect(s: &[C]) -> f64 {
    if s.len() == 1 {
        return (s[0].norm() - 1.0).abs();
    }
    let (a, b, c, d) = (s[0], s[1], s[2], s[3]);
    // S = [[a, b], [c, d]]; M = S*S − I is Hermitian
    let m11 = a.norm_sqr() + c.norm_sqr() - 1.0;
    let m22 = b.norm_sqr() + d.norm_sqr() - 1.0;
    let m12 = a.conj() * b + c.conj() * d;
    let tr = 0.5 * (m11 + m22);
    let disc = (0.25 * (m11 - m22).powi(2) + m12.norm_sqr()).sqrt();
    (tr + disc).abs().max((tr - disc).abs())
}

/// Scattering data at one λ.
#[derive(Debug, Clone, Serialize)]
pub struct ScatteringEntry {
    pub lambda: f64,
    /// Entries extrapolated from the `X` and `2X` solves.
    pub entries: Vec<C>,
    pub entries_x: Vec<C>,
    pub entries_2x: Vec<C>,
    /// Defect of the extrapolated entries.
    pub unitarity_defect: f64,
    pub unitarity_defect_x: f64,
    pub unitarity_defect_2x: f64,
    /// `max |S(X) − S(2X)|`; the recorded tolerance.
    pub truncation_estimate: f64,
    pub truncation_x: f64,
    pub nodes: usize,
    pub max_residual: f64,
    pub max_condition: f64,
}

impl ScatteringEntry {
    /// `|s12 − s21|` for even n.
    pub fn reciprocity_defect(&self) -> Option<f64> {
        (self.entries.len() == 4).then(|| (self.entries[1] - self.entries[2]).norm())
    }
}

/// Collection of entries over a λ-grid.
#[derive(Debug, Clone, Serialize)]
pub struct ScatteringData {
    pub n: usize,
    pub truncation_x: f64,
    pub entries: Vec<ScatteringEntry>,
}

/// Points per unit `k` for the mesh step cap `h_max = STEP_K / k_max`.
pub const STEP_K: f64 = 0.25;

/// Solver with cached meshes and coefficient tables at radii `X` and `2X`.
#[derive(Debug, Clone)]
pub struct ScatteringSolver {
    n: usize,
    x: f64,
    coarse: LsProblem,
    fine: LsProblem,
}

impl ScatteringSolver {
    /// `lambda_max` bounds `|λ|` over the intended grid and fixes the mesh step.
    pub fn new(op: &OperatorCoefficients, x_trunc: f64, lambda_max: f64) -> Result<Self> {
        let n = op.n();
        if n == 0 {
            return Err(Error::Config("scattering needs n >= 1".into()));
        }
        let k_max = lambda_max.abs().powf(1.0 / n as f64).max(0.25);
        let h_max = STEP_K / k_max;
        let coarse = LsProblem::new(op, Mesh::graded(x_trunc, h_max)?)?;
        let fine = LsProblem::new(op, Mesh::graded(2.0 * x_trunc, h_max)?)?;
        Ok(Self { n, x: x_trunc, coarse, fine })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn truncation_x(&self) -> f64 {
        self.x
    }

    /// Problems at `X` and `2X`.
    pub fn problems(&self) -> (&LsProblem, &LsProblem) {
        (&self.coarse, &self.fine)
    }

    fn ks(&self, lambda: f64) -> Result<Vec<f64>> {
        if lambda == 0.0 {
            return Err(Error::DegenerateSpectralPoint("lambda = 0".into()));
        }
        if self.n % 2 == 0 {
            if lambda < 0.0 {
                return Err(Error::NoPropagating(format!(
                    "lambda = {lambda} < 0 has no oscillating solutions for even n"
                )));
            }
            let k = lambda.powf(1.0 / self.n as f64);
            Ok(vec![k, -k])
        } else {
            Ok(vec![lambda.signum() * lambda.abs().powf(1.0 / self.n as f64)])
        }
    }

    fn at(&self, prob: &LsProblem, lambda: f64) -> Result<(Vec<C>, f64, f64)> {
        let ks = self.ks(lambda)?;
        let fields: Vec<EigenfunctionField> = ks.iter().map(|&k| prob.solve(k)).collect::<Result<_>>()?;
        let res = fields.iter().map(|f| f.residual).fold(0.0, f64::max);
        let cond = fields.iter().map(|f| f.condition).fold(0.0, f64::max);
        Ok((scattering_from_fields(self.n, &fields[0], fields.get(1)), res, cond))
    }

    /// Entries from the `X` solve only.
    pub fn entries_at_x(&self, lambda: f64) -> Result<Vec<C>> {
        Ok(self.at(&self.coarse, lambda)?.0)
    }

    pub fn entry(&self, lambda: f64) -> Result<ScatteringEntry> {
        let (sx, r1, c1) = self.at(&self.coarse, lambda)?;
        let (s2, r2, c2) = self.at(&self.fine, lambda)?;
        let ext: Vec<C> = sx.iter().zip(&s2).map(|(a, b)| 2.0 * b - a).collect();
        let trunc = sx.iter().zip(&s2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        Ok(ScatteringEntry {
            lambda,
            unitarity_defect: unitarity_defect(&ext),
            unitarity_defect_x: unitarity_defect(&sx),
            unitarity_defect_2x: unitarity_defect(&s2),
            entries: ext,
            entries_x: sx,
            entries_2x: s2,
            truncation_estimate: trunc,
            truncation_x: self.x,
            nodes: self.coarse.mesh.len(),
            max_residual: r1.max(r2),
            max_condition: c1.max(c2),
        })
    }

    /// Entries over a λ-grid, in parallel.
    pub fn sweep(&self, lambdas: &[f64]) -> Vec<Result<ScatteringEntry>> {
        lambdas.par_iter().map(|&l| self.entry(l)).collect()
    }
}

/// One-shot scattering entry at λ with truncation radius `x_trunc`.
pub fn scattering_matrix(op: &OperatorCoefficients, lambda: f64, x_trunc: f64) -> Result<ScatteringEntry> {
    ScatteringSolver::new(op, x_trunc, lambda)?.entry(lambda)
}

/// Smallest radius (doubling from 10, capped at `cap`) beyond which `Σ_m |b̃_m| < tol`
/// at both `±x`.
pub fn truncation_radius(op: &OperatorCoefficients, tol: f64, cap: f64) -> Result<f64> {
    let n = op.n();
    let mut x: f64 = 10.0;
    loop {
        let mut s = 0.0;
        for sx in [x, -x] {
            let b = op.gauged_coefficients(sx)?;
            s += b[..n.saturating_sub(1)].iter().map(|c| c.norm()).sum::<f64>();
        }
        if 0.5 * s < tol || x >= cap {
            return Ok(x.min(cap));
        }
        x *= 2.0;
    }
}

/// Transmission and reflection for `n = 2` by an independent method.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossCheck {
    pub k: f64,
    /// `s11` for `k > 0`, `s22` for `k < 0`.
    pub transmission: C,
    /// `s21` for `k > 0`, `s12` for `k < 0`.
    pub reflection: C,
}

/// Two-sided shooting for `−ψ'' + b(x) ψ = k² ψ` on `[−X, X]`, written for the
/// amplitudes of `ψ = A e^{iκx} + B e^{−iκx}` (`κ = |k|`) and integrated by RK4
/// across the given breakpoints.
pub fn shoot_n2(b: &(dyn Fn(f64) -> C + Sync), breakpoints: &[f64], k: f64, x_trunc: f64, h_max: f64) -> Result<CrossCheck> {
    if k == 0.0 {
        return Err(Error::DegenerateSpectralPoint("k = 0".into()));
    }
    let kap = k.abs();
    // `xb` is the point where `b` is sampled, kept inside the current segment
    let rhs = |x: f64, xb: f64, ab: [C; 2]| -> [C; 2] {
        let (ep, em) = ((I * kap * x).exp(), (-I * kap * x).exp());
        let psi = ab[0] * ep + ab[1] * em;
        let f = b(xb) * psi / (2.0 * I * kap);
        [f * em, -f * ep]
    };
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|p| p.abs() < x_trunc).collect();
    pts.push(-x_trunc);
    pts.push(x_trunc);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let step = |x0: f64, x1: f64, mut y: [C; 2]| -> [C; 2] {
        let mut x = x0;
        let dir = (x1 - x0).signum();
        let (lo, hi) = (x0.min(x1), x0.max(x1));
        let eps = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
        let inside = |t: f64| t.clamp(lo + eps, hi - eps);
        while (x1 - x) * dir > 0.0 {
            let h = (h_max.min(0.2 / kap).min(0.01 + 0.05 * x.abs())).min((x1 - x).abs()) * dir;
            let k1 = rhs(x, inside(x), y);
            let m = |a: [C; 2], s: [C; 2], c: f64| [a[0] + s[0] * c, a[1] + s[1] * c];
            let k2 = rhs(x + 0.5 * h, inside(x + 0.5 * h), m(y, k1, 0.5 * h));
            let k3 = rhs(x + 0.5 * h, inside(x + 0.5 * h), m(y, k2, 0.5 * h));
            let k4 = rhs(x + h, inside(x + h), m(y, k3, h));
            for q in 0..2 {
                y[q] += (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]) * (h / 6.0);
            }
            x += h;
        }
        y
    };
    let one = C::new(1.0, 0.0);
    let zero = C::new(0.0, 0.0);
    let out = if k > 0.0 {
        let mut y = [one, zero];
        for w in pts.windows(2).rev() {
            y = step(w[1], w[0], y);
        }
        CrossCheck { k, transmission: one / y[0], reflection: y[1] / y[0] }
    } else {
        let mut y = [zero, one];
        for w in pts.windows(2) {
            y = step(w[0], w[1], y);
        }
        CrossCheck { k, transmission: one / y[1], reflection: y[0] / y[1] }
    };
    if !(out.transmission.norm().is_finite() && out.reflection.norm().is_finite()) {
        return Err(Error::Integration("shooting produced non-finite amplitudes".into()));
    }
    Ok(out)
}

/// Shooting cross-check for the gauged operator of `op` (requires `n = 2`).
pub fn ode_cross_check(op: &OperatorCoefficients, k: f64, x_trunc: f64) -> Result<CrossCheck> {
    if op.n() != 2 {
        return Err(Error::Precondition("the shooting cross-check is implemented for n = 2".into()));
    }
    let b = |x: f64| op.gauged_coefficients(x).map(|c| c[0]).unwrap_or(C::new(0.0, 0.0));
    shoot_n2(&b, &[], k, x_trunc, 0.2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffmap::{p_to_q, RealPolynomial};
    use crate::profile::WeightProfile;

    fn cosh_op(p: &[f64]) -> OperatorCoefficients {
        let q = p_to_q(&RealPolynomial::new(p.to_vec()));
        OperatorCoefficients::new(q, WeightProfile::cosh(p.len() - 1)).unwrap()
    }

    #[test]
    fn roots_of_minus_one() {
        let r = zeta_roots(C::new(-1.0, 0.0), 2, Side::Upper).unwrap();
        assert_eq!(r.upper.len(), 1);
        assert_eq!(r.lower.len(), 1);
        assert!((r.roots[r.upper[0]] - I).norm() < 1e-15);
        assert!(r.real.is_empty());
    }

    #[test]
    fn root_counts() {
        let r = zeta_roots(C::new(1.0, 0.0), 3, Side::Upper).unwrap();
        assert_eq!(r.upper.len(), 1);
        assert_eq!(r.real.len(), 1);
        assert!(r.real_moves_up[0]);
        let r = zeta_roots(C::new(-1.0, 0.0), 4, Side::Upper).unwrap();
        assert_eq!(r.upper.len(), 2);
        for z in [C::new(2.0, 0.5), C::new(-3.0, -1.0), C::new(0.1, 0.0)] {
            for n in 1..7 {
                let r = zeta_roots(z, n, Side::Lower).unwrap();
                for zeta in &r.roots {
                    assert!((zeta.powi(n as i32) - z).norm() < 1e-12 * z.norm());
                }
                if z.im != 0.0 {
                    assert!(r.real.is_empty());
                }
            }
        }
        assert!(matches!(zeta_roots(C::new(0.0, 0.0), 2, Side::Upper), Err(Error::DegenerateSpectralPoint(_))));
    }

    #[test]
    fn real_roots_follow_the_limit() {
        // n = 2: +k moves up, −k moves down under λ + i0
        let r = zeta_roots(C::new(4.0, 0.0), 2, Side::Upper).unwrap();
        let up = r.kernel_upper();
        assert_eq!(up.len(), 1);
        assert_eq!(r.roots[up[0]], C::new(2.0, 0.0));
        let r = zeta_roots(C::new(4.0, 0.0), 2, Side::Lower).unwrap();
        assert_eq!(r.roots[r.kernel_upper()[0]], C::new(-2.0, 0.0));
        // n = 3, λ < 0: the real root −|k| moves up
        let r = zeta_roots(C::new(-8.0, 0.0), 3, Side::Upper).unwrap();
        let up = r.kernel_upper();
        assert!(up.iter().any(|&j| r.roots[j] == C::new(-2.0, 0.0)));
    }

    #[test]
    fn multiplicity_bounds() {
        assert_eq!(eigenvalue_multiplicity_bound(3, 1.0).unwrap(), 1);
        assert_eq!(eigenvalue_multiplicity_bound(4, 1.0).unwrap(), 1);
        assert_eq!(eigenvalue_multiplicity_bound(4, -1.0).unwrap(), 2);
        for n in 1..10 {
            let odd = eigenvalue_multiplicity_bound(n, 1.0).unwrap();
            if n % 2 == 1 {
                assert_eq!(odd, (n - 1) / 2);
                assert_eq!(eigenvalue_multiplicity_bound(n, -1.0).unwrap(), (n - 1) / 2);
            } else {
                assert_eq!(odd, n / 2 - 1);
                assert_eq!(eigenvalue_multiplicity_bound(n, -1.0).unwrap(), n / 2);
            }
        }
    }

    #[test]
    fn laplacian_resolvent() {
        let z = C::new(-1.0, 0.0);
        for (x, y) in [(0.0, 0.0), (1.0, 0.3), (-2.0, 0.5)] {
            let r = free_resolvent_kernel(x, y, z, 2, Side::Upper).unwrap();
            let exact = 0.5 * (-(x - y as f64).abs()).exp();
            assert!((r - exact).norm() < 1e-14, "{r} vs {exact}");
        }
        // (D² + 1) R₀ = δ: away from the diagonal the kernel is annihilated
        let f = |x: f64| free_resolvent_kernel(x, 0.0, z, 2, Side::Upper).unwrap().re;
        let h = 1e-3;
        for x in [0.7, -1.3] {
            let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            assert!((-d2 + f(x)).abs() < 1e-6);
        }
        // unit jump of the first derivative at the diagonal
        let jump = (f(h) - f(0.0)) / h - (f(0.0) - f(-h)) / h;
        assert!((jump + 1.0).abs() < 2e-3);
    }

    #[test]
    fn conjugation_symmetry() {
        for n in [2usize, 4] {
            let z = C::new(0.7, 0.4);
            for (x, y) in [(0.3, -0.2), (-1.0, 0.8)] {
                let a = free_resolvent_kernel(x, y, z.conj(), n, Side::Upper).unwrap();
                let b = free_resolvent_kernel(x, y, z, n, Side::Upper).unwrap();
                assert!((a - b.conj()).norm() < 1e-13);
            }
        }
        // odd n: R₀(x,y; z̄) = −conj R₀(x,y; −z)
        let z = C::new(0.7, 0.4);
        for (x, y) in [(0.3, -0.2), (-1.0, 0.8)] {
            let a = free_resolvent_kernel(x, y, z.conj(), 3, Side::Upper).unwrap();
            let b = free_resolvent_kernel(x, y, -z, 3, Side::Upper).unwrap();
            assert!((a + b.conj()).norm() < 1e-13);
        }
        assert!(free_resolvent_kernel(0.0, 0.0, C::new(0.0, 0.0), 2, Side::Upper).is_err());
    }

    #[test]
    fn free_problem_is_trivial() {
        let mesh = Mesh::graded(50.0, 0.3).unwrap();
        let len = mesh.len();
        for n in [2usize, 3, 4] {
            let p = LsProblem::from_table(n, mesh.clone(), vec![vec![C::new(0.0, 0.0); len]; n - 1]).unwrap();
            for k in [0.8, -1.3] {
                let f = p.solve(k).unwrap();
                for (pp, d) in f.derivatives.iter().enumerate() {
                    for (x, v) in f.x.iter().zip(d) {
                        assert!((v - k.powi(pp as i32) * (I * k * x).exp()).norm() < 1e-14);
                    }
                }
                let r = r_functions(&f);
                assert!((r.plus_limits.1 - 1.0).norm() < 1e-14);
                if n % 2 == 0 {
                    assert!(r.minus_limits.unwrap().0.norm() < 1e-14);
                }
            }
        }
    }

    fn gaussian_table(mesh: &Mesh, amp: f64) -> Vec<C> {
        mesh.x.iter().map(|x| C::new(amp * (-x * x / 2.0).exp(), 0.0)).collect()
    }

    #[test]
    fn gaussian_well_matches_shooting() {
        let mesh = Mesh::uniform(30.0, 0.025).unwrap();
        let table = gaussian_table(&mesh, -1.5);
        let p = LsProblem::from_table(2, mesh, vec![table]).unwrap();
        let pot = |x: f64| C::new(-1.5 * (-x * x / 2.0).exp(), 0.0);
        for k in [0.6, 1.2, -0.9] {
            let f = p.solve(k).unwrap();
            assert!(f.residual < 1e-10);
            let r = r_functions(&f);
            let ode = shoot_n2(&pot, &[], k, 30.0, 0.02).unwrap();
            let (t, refl) = if k > 0.0 {
                (r.plus_limits.1, r.minus_limits.unwrap().0)
            } else {
                (r.plus_limits.0, r.minus_limits.unwrap().1)
            };
            assert!((t - ode.transmission).norm() < 1e-7, "k={k}: {t} vs {}", ode.transmission);
            assert!((refl - ode.reflection).norm() < 1e-7, "k={k}: {refl} vs {}", ode.reflection);
            assert!((t.norm_sqr() + refl.norm_sqr() - 1.0).abs() < 1e-7);
        }
    }

    /// Closed-form transmission and reflection of `−ψ'' − V₀ 1_{[−a,a]} ψ = k² ψ`.
    fn square_well(v0: f64, a: f64, k: f64) -> (C, C) {
        let q = (k * k + v0).sqrt();
        let (s, c) = ((2.0 * q * a).sin(), (2.0 * q * a).cos());
        let den = C::new(c, -(k * k + q * q) / (2.0 * k * q) * s);
        let t = (-I * 2.0 * k * a).exp() / den;
        let r = I * (q * q - k * k) / (2.0 * k * q) * s * t;
        (t, r)
    }

    #[test]
    fn shooting_reproduces_square_well() {
        let (v0, a) = (2.0, 1.0);
        let pot = move |x: f64| if x.abs() < a { C::new(-v0, 0.0) } else { C::new(0.0, 0.0) };
        for k in [0.3, 1.0, 2.5] {
            let (t, r) = square_well(v0, a, k);
            let ode = shoot_n2(&pot, &[-a, a], k, 5.0, 0.005).unwrap();
            assert!((ode.transmission - t).norm() < 1e-6, "k={k} {} vs {t}; {} vs {r}", ode.transmission, ode.reflection);
            assert!((ode.reflection - r).norm() < 1e-6);
            // even well: same numbers from the right
            let left = shoot_n2(&pot, &[-a, a], -k, 5.0, 0.005).unwrap();
            assert!((left.transmission - t).norm() < 1e-6);
            assert!((left.reflection - r).norm() < 1e-6);
        }
        let free = shoot_n2(&|_| C::new(0.0, 0.0), &[], 1.0, 5.0, 0.1).unwrap();
        assert_eq!(free.transmission, C::new(1.0, 0.0));
        assert_eq!(free.reflection, C::new(0.0, 0.0));
    }

    /// `−R₀ V ψ₀` at `x` by direct adaptive quadrature of the free kernel.
    fn born_term(x: f64, k: f64, amp: f64) -> C {
        let z = C::new(k * k, 0.0);
        let g = |y: f64| {
            free_resolvent_kernel(x, y, z, 2, Side::Upper).unwrap()
                * amp
                * (-y * y / 2.0).exp()
                * (I * k * y).exp()
        };
        let re = crate::quad::adaptive_gl(&|y: f64| g(y).re, -12.0, x, 1e-13)
            + crate::quad::adaptive_gl(&|y: f64| g(y).re, x, 12.0, 1e-13);
        let im = crate::quad::adaptive_gl(&|y: f64| g(y).im, -12.0, x, 1e-13)
            + crate::quad::adaptive_gl(&|y: f64| g(y).im, x, 12.0, 1e-13);
        -C::new(re, im)
    }

    #[test]
    fn born_series_at_weak_coupling() {
        let mesh = Mesh::graded(14.0, 0.1).unwrap();
        let table = gaussian_table(&mesh, 1.0);
        let k = 0.9;
        let probe = [-1.0, 0.0, 0.5, 2.0];
        let oracle: Vec<C> = probe.iter().map(|&x| born_term(x, k, 1.0)).collect();
        let mut errs = vec![];
        let epss = [1e-2, 5e-3, 2.5e-3];
        for eps in epss {
            let p = LsProblem::from_table(2, mesh.clone(), vec![table.clone()]).unwrap().with_coupling(eps);
            let f = p.solve(k).unwrap();
            let mut e: f64 = 0.0;
            for (x, o) in probe.iter().zip(&oracle) {
                let got = f.psi_at(*x) - (I * k * x).exp();
                e = e.max((got - o * eps).norm());
            }
            errs.push(e);
        }
        let (slope, _) = crate::quad::linear_fit(
            &epss.iter().map(|e| e.ln()).collect::<Vec<_>>(),
            &errs.iter().map(|e| e.ln()).collect::<Vec<_>>(),
        );
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}, errs {errs:?}");
    }

    #[test]
    fn solution_satisfies_the_ode() {
        // n = 3 with both perturbation coefficients present
        let mesh = Mesh::uniform(12.0, 0.02).unwrap();
        let b0: Vec<C> = mesh.x.iter().map(|x| C::new(0.4 * (-x * x).exp(), 0.1 * x * (-x * x).exp())).collect();
        let b1: Vec<C> = mesh.x.iter().map(|x| C::new(-0.8 / (x * x + 1.0).powi(3), 0.0)).collect();
        let p = LsProblem::from_table(3, mesh, vec![b0.clone(), b1.clone()]).unwrap();
        let k = 1.1;
        let f = p.solve(k).unwrap();
        // i^{-3} ψ''' = D³ψ: check D(D²ψ) by differences against k³ψ − b̃₁Dψ − b̃₀ψ
        let h = f.x[1] - f.x[0];
        let mut worst: f64 = 0.0;
        for i in (100..f.x.len() - 100).step_by(37) {
            let d3 = -I * (f.derivatives[2][i + 1] - f.derivatives[2][i - 1]) / (2.0 * h);
            let rhs = k.powi(3) * f.derivatives[0][i] - b1[i] * f.derivatives[1][i] - b0[i] * f.derivatives[0][i];
            worst = worst.max((d3 - rhs).norm());
        }
        assert!(worst < 1e-3, "{worst}");
        // odd n: unitarity and decomposition
        let s = r_functions(&f).plus_limits.1;
        let dec = f.psi_dec();
        let osc = f.psi_osc();
        for i in 0..f.x.len() {
            assert!((f.psi()[i] - osc[i] - dec[i]).norm() < 1e-12);
        }
        assert!(dec[0].norm() < 1e-5 && dec.last().unwrap().norm() < 1e-5);
        assert!(r_functions(&f).plus_limits.0 == C::new(1.0, 0.0));
        let _ = s;
    }

    #[test]
    fn n1_is_gauge_trivial() {
        let op = cosh_op(&[0.3, 1.0]);
        for lambda in [0.5, -0.5, 1.0, -1.0, 2.0, -2.0] {
            let e = scattering_matrix(&op, lambda, 200.0).unwrap();
            assert!((e.entries[0] - 1.0).norm() < 1e-8);
        }
    }

    #[test]
    fn even_n_rejects_negative_energy() {
        let op = cosh_op(&[0.0, 0.0, 1.0]);
        let s = ScatteringSolver::new(&op, 50.0, 1.0).unwrap();
        assert!(matches!(s.entry(-1.0), Err(Error::NoPropagating(_))));
        assert!(matches!(s.entry(0.0), Err(Error::DegenerateSpectralPoint(_))));
    }

    #[test]
    fn cosh_n2_cross_check() {
        let op = cosh_op(&[0.0, 0.0, 1.0]);
        let x = 400.0;
        let s = ScatteringSolver::new(&op, x, 1.0).unwrap();
        let sx = s.entries_at_x(1.0).unwrap();
        let ode = ode_cross_check(&op, 1.0, x).unwrap();
        assert!((sx[0] - ode.transmission).norm() < 1e-5, "{} vs {}", sx[0], ode.transmission);
        assert!((sx[2] - ode.reflection).norm() < 1e-5);
        assert!(unitarity_defect(&sx) < 1e-5);
        assert!((sx[1] - sx[2]).norm() < 1e-5);
    }
}
