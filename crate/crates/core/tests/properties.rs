use std::f64::consts::PI;
use std::sync::OnceLock;

use carleman::coeffmap::{p_to_q, q_to_p, RealPolynomial};
use carleman::evolution::stationary_point_y;
use carleman::hankelphase::{hankel_kernel, phase_gamma, HankelGeometry, PhaseModel};
use carleman::liouville::OperatorCoefficients;
use carleman::profile::{ChangeOfVariables, WeightProfile};
use carleman::specfun::complex_gamma;
use carleman::statphase::{evaluate_j, GaussianAmplitude, PolyPhase};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn poly(coeffs: Vec<f64>) -> RealPolynomial<f64> {
    RealPolynomial::new(coeffs)
}

fn monic_strategy(max_degree: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 0..=max_degree).prop_map(|mut c| {
        c.push(1.0);
        c
    })
}

fn cosh_cov(n: usize) -> &'static ChangeOfVariables<f64> {
    static COVS: OnceLock<Vec<ChangeOfVariables<f64>>> = OnceLock::new();
    &COVS.get_or_init(|| (1..=4).map(|n| ChangeOfVariables::new(WeightProfile::cosh(n)).unwrap()).collect())[n - 1]
}

fn cosh_ops() -> &'static [OperatorCoefficients] {
    static OPS: OnceLock<Vec<OperatorCoefficients>> = OnceLock::new();
    OPS.get_or_init(|| {
        (2..=3)
            .map(|n| {
                let mut p = vec![0.0; n + 1];
                p[n] = 1.0;
                OperatorCoefficients::new(p_to_q(&poly(p)), WeightProfile::cosh(n)).unwrap()
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn gamma_reflection(re in -4.0f64..4.0, im in prop_oneof![-3.0f64..-0.05, 0.05f64..3.0]) {
        let z = C::new(re, im);
        let lhs = complex_gamma(z).unwrap() * complex_gamma(C::new(1.0, 0.0) - z).unwrap() * (z * PI).sin() / PI;
        prop_assert!((lhs - 1.0).norm() < 1e-10, "z = {z}: {lhs}");
    }

    #[test]
    fn coefficient_map_round_trip(p in monic_strategy(8)) {
        let p = poly(p);
        let q = p_to_q(&p);
        let back = q_to_p(&q);
        // roundoff is relative to the largest coefficient on either side of the map
        let scale = p.coeffs.iter().chain(&q.coeffs).fold(1.0f64, |m, c| m.max(c.abs()));
        for m in 0..=p.degree() {
            prop_assert!((back.coeff(m) - p.coeff(m)).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn coefficient_map_is_linear(a in monic_strategy(6), b in monic_strategy(6), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let len = a.len().max(b.len());
        let pad = |v: &[f64]| { let mut w = v.to_vec(); w.resize(len, 0.0); w };
        let (a, b) = (pad(&a), pad(&b));
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| s * x + t * y).collect();
        let (qa, qb, qc) = (p_to_q(&poly(a)), p_to_q(&poly(b)), p_to_q(&poly(combo)));
        for m in 0..len {
            let expect = s * qa.coeff(m) + t * qb.coeff(m);
            prop_assert!((qc.coeff(m) - expect).abs() < 1e-11 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn coefficient_map_is_triangular(p in monic_strategy(6), m in 0usize..6, bump in -1.0f64..1.0) {
        // changing p_j for j < m must leave q_m untouched
        prop_assume!(m > 0 && m < p.len());
        let mut changed = p.clone();
        changed[m - 1] += bump;
        let (q1, q2) = (p_to_q(&poly(p)), p_to_q(&poly(changed)));
        prop_assert_eq!(q1.coeff(m), q2.coeff(m));
    }

    #[test]
    fn change_of_variables_is_odd_and_monotone(n in 1usize..=4, xi in -20.0f64..20.0) {
        let cov = cosh_cov(n);
        let x = cov.x_of_xi(xi).unwrap();
        let xm = cov.x_of_xi(-xi).unwrap();
        prop_assert!((x + xm).abs() < 1e-10 * (1.0 + x.abs()));
        prop_assert!(cov.xi_prime(x).unwrap() > 0.0);
        prop_assert!((cov.xi_of_x(x).unwrap() - xi).abs() < 1e-9);
    }

    #[test]
    fn b_coefficients_conjugate_symmetric(x in 0.0f64..200.0, q0 in -1.0f64..1.0, q1 in -1.0f64..1.0) {
        let op = OperatorCoefficients::new(poly(vec![q0, q1, 0.3, 1.0]), WeightProfile::cosh(3)).unwrap();
        let a = op.b_coefficients(x).unwrap();
        let b = op.b_coefficients(-x).unwrap();
        for (u, w) in a.iter().zip(&b) {
            prop_assert!((u - w.conj()).norm() < 1e-9);
        }
    }

    #[test]
    fn kernel_matches_polynomial(t in 1e-6f64..1e6, p in monic_strategy(4)) {
        let p = poly(p);
        let expect = p.eval(t.ln());
        prop_assert!((hankel_kernel(t, &p).unwrap() * t - expect).abs() < 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn phase_model_identity(n in 1usize..=4, k in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0], nb in prop_oneof![-1e4f64..-1.0, 1.0f64..1e4], q in -1.0f64..1.0) {
        let model = PhaseModel::new(n, k, q).unwrap();
        prop_assert_eq!(phase_gamma(nb, k, &model).unwrap().to_bits(), model.gamma(nb).unwrap().to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gaussian_stationary_phase_closed_form(beta in 0.5f64..4.0, nb in 1.0f64..1e4) {
        let g = GaussianAmplitude { beta };
        let v = evaluate_j(&PolyPhase::quadratic(), &g, nb).unwrap();
        let exact = (C::new(PI, 0.0) / C::new(beta, -nb)).sqrt() * 0.5;
        prop_assert!((v - exact).norm() < 1e-10);
    }

    #[test]
    fn stationary_point_residual(which in 0usize..2, ratio in prop_oneof![-10.0f64..-0.2, 0.2f64..10.0], log_t in 1.0f64..4.0) {
        let op = &cosh_ops()[which];
        let geo = HankelGeometry::from_operator(op).unwrap();
        let t = 10f64.powf(log_t);
        let sp = stationary_point_y(ratio * t, t, &geo).unwrap();
        let roots: Vec<_> = [sp.y, sp.y1].into_iter().flatten().collect();
        prop_assert_eq!(roots.len(), 1);
        for r in roots {
            prop_assert!(r.residual < 1e-10, "residual {}", r.residual);
        }
    }
}
