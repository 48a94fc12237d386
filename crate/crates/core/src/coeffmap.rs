//! Map between the kernel polynomial `P` and the symbol polynomial `Q`.
//!
//! With `γ(z) = 1/Γ(1−z)`,
//! `q_m = Σ_{j≥m} C(j,m) γ^{(j−m)}(0) p_j`. The matrix is unit upper
//! triangular, so the inverse is a back-substitution.

use serde::{Deserialize, Serialize};

use crate::specfun::recip_gamma_taylor;
use crate::Real;

/// Real polynomial stored lowest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealPolynomial<T> {
    pub coeffs: Vec<T>,
}

impl<T: Real> RealPolynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_monic(&self) -> bool {
        *self.coeffs.last().unwrap() == T::one()
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &a| acc * x + a)
    }

    /// Coefficient of `X^m`, zero past the degree.
    pub fn coeff(&self, m: usize) -> T {
        self.coeffs.get(m).copied().unwrap_or_else(T::zero)
    }
}

/// `M[m][j] = j!/m! · c_{j−m}` for `j ≥ m`, where `c_i` are Taylor
/// coefficients of `γ`.
fn transfer_row<T: Real>(m: usize, j: usize, c: &[T]) -> T {
    let mut r = c[j - m];
    for i in (m + 1)..=j {
        r = r * T::from_usize(i).unwrap();
    }
    r
}

pub fn p_to_q<T: Real>(p: &RealPolynomial<T>) -> RealPolynomial<T> {
    let n = p.degree();
    let series = recip_gamma_taylor::<T>(n.min(30)).expect("degree at most 30");
    let c = &series.coeffs;
    let q = (0..=n)
        .map(|m| {
            (m..=n).fold(T::zero(), |acc, j| acc + transfer_row(m, j, c) * p.coeffs[j])
        })
        .collect();
    RealPolynomial { coeffs: q }
}

pub fn q_to_p<T: Real>(q: &RealPolynomial<T>) -> RealPolynomial<T> {
    let n = q.degree();
    let series = recip_gamma_taylor::<T>(n.min(30)).expect("degree at most 30");
    let c = &series.coeffs;
    let mut p = vec![T::zero(); n + 1];
    for m in (0..=n).rev() {
        let mut s = q.coeffs[m];
        for j in (m + 1)..=n {
            s = s - transfer_row(m, j, c) * p[j];
        }
        p[m] = s;
    }
    RealPolynomial { coeffs: p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EG: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn constant_maps_to_itself() {
        let q = p_to_q(&RealPolynomial::new(vec![1.0]));
        assert_eq!(q.coeffs, vec![1.0]);
        assert_eq!(q_to_p(&q).coeffs, vec![1.0]);
    }

    #[test]
    fn linear_kernel() {
        let q = p_to_q(&RealPolynomial::new(vec![0.0, 1.0]));
        assert_eq!(q.coeffs[1], 1.0);
        assert!((q.coeffs[0] + EG).abs() < 1e-15);
    }

    #[test]
    fn quadratic_kernel() {
        let q = p_to_q(&RealPolynomial::new(vec![0.0, 0.0, 1.0]));
        let pi2 = std::f64::consts::PI.powi(2);
        assert_eq!(q.coeffs[2], 1.0);
        assert!((q.coeffs[1] + 2.0 * EG).abs() < 1e-15);
        // γ''(0) = 2 c_2 = γ_E² − π²/6
        assert!((q.coeffs[0] - (EG * EG - pi2 / 6.0)).abs() < 1e-14);
    }

    #[test]
    fn subleading_coefficient_formula() {
        // q_{n-1} = p_{n-1} + Γ'(1) n p_n
        let p = RealPolynomial::new(vec![0.3, -1.2, 0.7, 2.5, 1.0]);
        let q = p_to_q(&p);
        assert!((q.coeffs[3] - (2.5 - EG * 4.0)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn round_trip(coeffs in proptest::collection::vec(-5.0f64..5.0, 0..8)) {
            let mut c = coeffs;
            c.push(1.0);
            let p = RealPolynomial::new(c.clone());
            let back = q_to_p(&p_to_q(&p));
            for (a, b) in back.coeffs.iter().zip(&c) {
                prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn linearity(a in -3.0f64..3.0, b in -3.0f64..3.0,
                     p1 in proptest::collection::vec(-2.0f64..2.0, 5),
                     p2 in proptest::collection::vec(-2.0f64..2.0, 5)) {
            let comb: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| a * x + b * y).collect();
            let lhs = p_to_q(&RealPolynomial::new(comb));
            let q1 = p_to_q(&RealPolynomial::new(p1));
            let q2 = p_to_q(&RealPolynomial::new(p2));
            for m in 0..5 {
                let rhs = a * q1.coeffs[m] + b * q2.coeffs[m];
                prop_assert!((lhs.coeffs[m] - rhs).abs() < 1e-11);
            }
        }

        #[test]
        fn triangularity(p in proptest::collection::vec(-2.0f64..2.0, 6), m in 0usize..6, bump in -1.0f64..1.0) {
            // changing p_j for j < m leaves q_m unchanged
            let mut p2 = p.clone();
            for v in p2.iter_mut().take(m) { *v += bump; }
            let q1 = p_to_q(&RealPolynomial::new(p));
            let q2 = p_to_q(&RealPolynomial::new(p2));
            prop_assert_eq!(q1.coeffs[m], q2.coeffs[m]);
        }
    }
}
