//! Truncated Taylor series ("jets") for forward-mode higher derivatives.
//!
//! A jet of length `len` around a point `a` stores `f^{(k)}(a) / k!` for
//! `k < len`. Ring operations work for any numeric coefficient type; the
//! elementary functions need a real scalar.

use std::ops::{Add, Mul, Neg, Sub};

use num_traits::Num;

use crate::Real;

/// Maximum number of stored coefficients.
pub const JET_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<S> {
    c: [S; JET_CAP],
    len: usize,
}

impl<S: Num + Copy> Jet<S> {
    pub fn zero(len: usize) -> Self {
        assert!(len >= 1 && len <= JET_CAP, "jet length {len} out of range");
        Self { c: [S::zero(); JET_CAP], len }
    }

    pub fn constant(v: S, len: usize) -> Self {
        let mut j = Self::zero(len);
        j.c[0] = v;
        j
    }

    /// The identity jet `a + h`.
    pub fn variable(a: S, len: usize) -> Self {
        let mut j = Self::constant(a, len);
        if len > 1 {
            j.c[1] = S::one();
        }
        j
    }

    pub fn from_coeffs(coeffs: &[S]) -> Self {
        let mut j = Self::zero(coeffs.len());
        j.c[..coeffs.len()].copy_from_slice(coeffs);
        j
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c[..self.len]
    }

    pub fn coeff(&self, k: usize) -> S {
        if k < self.len {
            self.c[k]
        } else {
            S::zero()
        }
    }

    pub fn value(&self) -> S {
        self.c[0]
    }

    /// `k`-th derivative at the expansion point.
    pub fn derivative_at(&self, k: usize) -> S {
        let mut f = S::one();
        let mut m = S::one();
        for _ in 1..=k {
            f = f * m;
            m = m + S::one();
        }
        self.coeff(k) * f
    }

    pub fn truncate(&self, len: usize) -> Self {
        let mut j = *self;
        j.len = len.min(self.len);
        for k in j.len..JET_CAP {
            j.c[k] = S::zero();
        }
        j
    }

    /// Jet of `f'`; one coefficient shorter.
    pub fn diff(&self) -> Self {
        let len = self.len.saturating_sub(1).max(1);
        let mut j = Self::zero(len);
        let mut m = S::one();
        for k in 0..self.len - 1 {
            j.c[k] = self.c[k + 1] * m;
            m = m + S::one();
        }
        j
    }

    /// Antiderivative vanishing at the expansion point; one coefficient longer
    /// (capped at `JET_CAP`).
    pub fn integrate(&self) -> Self {
        let len = (self.len + 1).min(JET_CAP);
        let mut j = Self::zero(len);
        let mut m = S::one();
        for k in 1..len {
            j.c[k] = self.c[k - 1] / m;
            m = m + S::one();
        }
        j
    }

    pub fn scale(&self, s: S) -> Self {
        let mut j = *self;
        for k in 0..j.len {
            j.c[k] = j.c[k] * s;
        }
        j
    }

    /// Evaluate the truncated series at offset `h`.
    pub fn eval(&self, h: S) -> S {
        self.coeffs().iter().rev().fold(S::zero(), |acc, &a| acc * h + a)
    }

    /// `self ∘ inner`, where `inner` has zero constant term.
    pub fn compose(&self, inner: &Self) -> Self {
        let len = self.len.min(inner.len);
        let mut d = inner.truncate(len);
        d.c[0] = S::zero();
        let mut out = Self::constant(self.c[len - 1], len);
        for k in (0..len - 1).rev() {
            out = out * d;
            out.c[0] = out.c[0] + self.c[k];
        }
        out
    }

    pub fn map<R: Num + Copy>(&self, f: impl Fn(S) -> R) -> Jet<R> {
        let mut j = Jet::<R>::zero(self.len);
        for k in 0..self.len {
            j.c[k] = f(self.c[k]);
        }
        j
    }
}

impl<S: Num + Copy> Add for Jet<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let len = self.len.min(o.len);
        let mut j = Self::zero(len);
        for k in 0..len {
            j.c[k] = self.c[k] + o.c[k];
        }
        j
    }
}

impl<S: Num + Copy> Sub for Jet<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let len = self.len.min(o.len);
        let mut j = Self::zero(len);
        for k in 0..len {
            j.c[k] = self.c[k] - o.c[k];
        }
        j
    }
}

impl<S: Num + Copy + Neg<Output = S>> Neg for Jet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut j = self;
        for k in 0..j.len {
            j.c[k] = -j.c[k];
        }
        j
    }
}

impl<S: Num + Copy> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let len = self.len.min(o.len);
        let mut j = Self::zero(len);
        for k in 0..len {
            let mut s = S::zero();
            for i in 0..=k {
                s = s + self.c[i] * o.c[k - i];
            }
            j.c[k] = s;
        }
        j
    }
}

impl<T: Real> Jet<T> {
    #[inline]
    fn k(i: usize) -> T {
        T::from_usize(i).unwrap()
    }

    pub fn recip(&self) -> Self {
        self.powf(-T::one())
    }

    pub fn div(&self, o: &Self) -> Self {
        *self * o.recip()
    }

    /// `f^a` for `f(a) > 0`, via `f g' = a f' g`.
    pub fn powf(&self, a: T) -> Self {
        let f = &self.c;
        let mut g = Self::zero(self.len);
        g.c[0] = f[0].powf(a);
        for k in 1..self.len {
            let mut s = T::zero();
            for j in 1..=k {
                s = s + ((a + T::one()) * Self::k(j) - Self::k(k)) * f[j] * g.c[k - j];
            }
            g.c[k] = s / (Self::k(k) * f[0]);
        }
        g
    }

    pub fn sqrt(&self) -> Self {
        self.powf(T::from_f64(0.5).unwrap())
    }

    pub fn exp(&self) -> Self {
        let f = &self.c;
        let mut g = Self::zero(self.len);
        g.c[0] = f[0].exp();
        for k in 1..self.len {
            let mut s = T::zero();
            for j in 1..=k {
                s = s + Self::k(j) * f[j] * g.c[k - j];
            }
            g.c[k] = s / Self::k(k);
        }
        g
    }

    pub fn ln(&self) -> Self {
        let f = &self.c;
        let mut g = Self::zero(self.len);
        g.c[0] = f[0].ln();
        for k in 1..self.len {
            let mut s = Self::k(k) * f[k];
            for j in 1..k {
                s = s - Self::k(j) * g.c[j] * f[k - j];
            }
            g.c[k] = s / (Self::k(k) * f[0]);
        }
        g
    }

    /// `(cosh f, sinh f)` by the coupled recurrences `C' = S f'`, `S' = C f'`.
    pub fn cosh_sinh(&self) -> (Self, Self) {
        let f = &self.c;
        let mut ch = Self::zero(self.len);
        let mut sh = Self::zero(self.len);
        ch.c[0] = f[0].cosh();
        sh.c[0] = f[0].sinh();
        for k in 1..self.len {
            let mut a = T::zero();
            let mut b = T::zero();
            for j in 1..=k {
                a = a + Self::k(j) * f[j] * sh.c[k - j];
                b = b + Self::k(j) * f[j] * ch.c[k - j];
            }
            ch.c[k] = a / Self::k(k);
            sh.c[k] = b / Self::k(k);
        }
        (ch, sh)
    }

    pub fn max_abs(&self) -> T {
        self.coeffs().iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}
