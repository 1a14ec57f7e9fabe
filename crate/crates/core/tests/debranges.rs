mod common;

use canon_core::debranges::*;
use canon_core::quad::integrate_line;
use canon_core::{ComplexPolynomial, RealPolynomial, C64};
use common::rng;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

fn rp(c: &[f64]) -> RealPolynomial {
    RealPolynomial::from_raw(c.to_vec())
}

fn cp(c: &[(f64, f64)]) -> ComplexPolynomial {
    ComplexPolynomial::from_raw(c.iter().map(|&(a, b)| C64::new(a, b)).collect())
}

/// E = ∏(1 − z/r) with zeros r in the open lower half-plane.
fn random_e(seed: u64, n: usize) -> HBPolynomial {
    let mut r = rng(seed);
    let roots: Vec<C64> = (0..n).map(|_| C64::new(r.gen_range(-2.0..2.0), -r.gen_range(0.2..2.0))).collect();
    let mut e = ComplexPolynomial::constant(C64::new(1.0, 0.0));
    for z in roots {
        e = e.mul(&ComplexPolynomial::from_raw(vec![C64::new(1.0, 0.0), -z.inv()]));
    }
    HBPolynomial::from_e(&e).unwrap()
}

fn quadrature_inner(f: &ComplexPolynomial, g: &ComplexPolynomial, hb: &HBPolynomial) -> C64 {
    let e = hb.e();
    integrate_line(
        |t| {
            let z = C64::new(t, 0.0);
            f.eval(z) * g.eval(z).conj() / e.eval(z).norm_sqr()
        },
        1e-13,
        1e-11,
    )
}

fn square() -> HBPolynomial {
    HBPolynomial::new(rp(&[1.0, 0.0, -1.0]), rp(&[0.0, -2.0])).unwrap()
}

#[test]
fn linear_space_has_norm_pi_and_constant_kernel() {
    let hb = HBPolynomial::new(rp(&[1.0]), rp(&[0.0, -1.0])).unwrap();
    let one = cp(&[(1.0, 0.0)]);
    let ip = inner_product(&one, &one, &hb).unwrap();
    assert!((ip - C64::new(PI, 0.0)).norm() < 1e-12);
    for (l, z) in [(C64::new(0.3, 1.0), C64::new(-2.0, 0.5)), (C64::new(0.0, 0.0), C64::new(4.0, -1.0))] {
        let k = reproducing_kernel(&hb, l, z).unwrap();
        assert!((k - C64::new(1.0 / PI, 0.0)).norm() < 1e-13);
    }
    assert!((system_length_from_e(&hb).unwrap() - 1.0).abs() < 1e-13);
}

#[test]
fn square_example_restores_second_column_and_length() {
    let hb = square();
    let col = reconstruct_second_column(&hb).unwrap();
    assert!(col.phi_plus.dist(&rp(&[0.0, 0.5])) < 1e-12, "{:?}", col.phi_plus);
    assert!(col.phi_minus.dist(&rp(&[1.0])) < 1e-12, "{:?}", col.phi_minus);
    assert!((system_length_from_e(&hb).unwrap() - 2.5).abs() < 1e-12);
    let d = verify_second_column(&hb, &col).unwrap();
    assert!(d.det_residual < 1e-12);
    assert!(d.partial_fraction_residual < 1e-10);
    assert!((d.trace_derivative - 2.5).abs() < 1e-12);
}

#[test]
fn hb_checks() {
    assert!(is_hermite_biehler(&cp(&[(1.0, 0.0), (0.0, -1.0)])).unwrap().is_hb);
    assert!(!is_hermite_biehler(&cp(&[(1.0, 0.0), (0.0, 1.0)])).unwrap().is_hb);
    // real zero: E(z) = 1 − z
    assert!(!is_hermite_biehler(&cp(&[(1.0, 0.0), (-1.0, 0.0)])).unwrap().is_hb);
    assert!(HBPolynomial::new(rp(&[1.0]), rp(&[0.0, 1.0])).unwrap_err().is_validation());
    let json = r#"{"theta_plus":{"coeffs":[1.0,0.0,-1.0]},"theta_minus":{"coeffs":[0.0,-2.0]},"normalized":true}"#;
    let hb: HBPolynomial = serde_json::from_str(json).unwrap();
    assert_eq!(hb, square());
    assert!(serde_json::from_str::<HBPolynomial>(
        r#"{"theta_plus":{"coeffs":[2.0]},"theta_minus":{"coeffs":[0.0,-1.0]},"normalized":true}"#
    )
    .is_err());
}

#[test]
fn elements_of_too_high_degree_are_rejected() {
    let hb = square();
    let space = DeBranges::new(&hb).unwrap();
    let z2 = cp(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
    assert!(space.inner(&z2, &z2).is_err());
    assert!(!membership_check(&z2, &hb).unwrap());
    assert!(membership_check(&cp(&[(1.0, 0.0), (0.5, -1.0)]), &hb).unwrap());
}

#[test]
fn kernel_reproduces_and_expands_in_an_orthonormal_basis() {
    for seed in 0..5 {
        let hb = random_e(seed, 4);
        let space = DeBranges::new(&hb).unwrap();
        let n = space.degree();
        // Gram–Schmidt on monomials with the residue inner product
        let mut basis: Vec<ComplexPolynomial> = Vec::new();
        for k in 0..n {
            let mut v = ComplexPolynomial::constant(C64::new(1.0, 0.0)).shift(k);
            for b in &basis {
                let c = space.inner(&v, b).unwrap();
                v = v.sub(&b.scale(c));
            }
            let nv = space.norm_sqr(&v).unwrap().sqrt();
            basis.push(v.scale(C64::new(1.0 / nv, 0.0)));
        }
        let l = C64::new(0.3, 0.7);
        let z = C64::new(-1.1, 0.2);
        let expanded: C64 = basis.iter().map(|b| b.eval(z) * b.eval(l).conj()).sum();
        assert!((space.kernel(l, z) - expanded).norm() < 1e-10 * expanded.norm().max(1.0));
        let f = cp(&[(0.5, 1.0), (-0.2, 0.3), (1.0, -1.0)]);
        let k = space.kernel_polynomial(l);
        assert!((space.inner(&f, &k).unwrap() - f.eval(l)).norm() < 1e-10 * f.eval(l).norm().max(1.0));
    }
}

#[test]
fn polya_monotonicity_and_herglotz_sign() {
    for seed in 10..15 {
        let hb = random_e(seed, 5);
        let e = hb.e();
        for x in [-3.0, -0.4, 0.0, 1.7] {
            let mut prev = 0.0;
            for k in 0..40 {
                let v = e.eval(C64::new(x, 0.05 * k as f64)).norm();
                assert!(v >= prev * (1.0 - 1e-14));
                prev = v;
            }
        }
        for k in 1..30 {
            let z = C64::from_polar(0.2 * k as f64, 0.1 * k as f64 % PI);
            if z.im <= 0.0 {
                continue;
            }
            let ratio = hb.theta_plus.eval_c(z) / hb.theta_minus.eval_c(z);
            assert!(ratio.im >= -1e-12, "Im Θ₊/Θ₋ = {}", ratio.im);
        }
    }
}

#[test]
fn herglotz_decomposition_reproduces_ratio() {
    let hb = random_e(21, 4);
    let h = herglotz_decomposition(&hb).unwrap();
    assert!(h.residues.iter().all(|&m| m < 0.0));
    assert!(h.b >= -1e-12);
    let z = C64::new(0.4, 0.9);
    let sum: C64 = h.poles.iter().zip(&h.residues).map(|(&t, &m)| m / (z - t)).sum::<C64>() + h.a + h.b * z;
    let ratio = hb.theta_plus.eval_c(z) / hb.theta_minus.eval_c(z);
    assert!((sum - ratio).norm() < 1e-10);
}

#[test]
fn restored_column_has_herglotz_ratios_on_random_inputs() {
    for seed in 30..36 {
        let e = random_e(seed, 5);
        let norm = e.e().coeff(0);
        let hb = HBPolynomial::from_e(&e.e().scale(norm.inv())).unwrap();
        let col = reconstruct_second_column(&hb).unwrap();
        let d = verify_second_column(&hb, &col).unwrap();
        assert!(d.det_residual < 1e-9, "{d:?}");
        assert!(d.partial_fraction_residual < 1e-7, "{d:?}");
        assert!(d.min_im_phi_minus_ratio > -1e-9 && d.min_im_phi_plus_ratio > -1e-9, "{d:?}");
        let l = system_length_from_e(&hb).unwrap();
        assert!((d.trace_derivative - l).abs() < 1e-8 * l.max(1.0));
    }
}

#[test]
fn numeric_type_of_polynomials_vanishes() {
    let hb = random_e(40, 6);
    let f = polynomial_log_modulus(&hb.e()).unwrap();
    assert!(numeric_type(f, 1e6).abs() < 1e-4);
}

#[test]
fn numeric_type_of_free_system_is_half_length() {
    let h = canon_core::hamiltonian::Hamiltonian::free(3.0);
    let f = system_log_modulus(&h);
    assert!((numeric_type(f, 200.0) - 1.5).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residue_inner_product_matches_line_quadrature(seed in 0u64..10_000, n in 1usize..6) {
        let hb = random_e(seed, n);
        let mut r = rng(seed ^ 0x55);
        let mut rand_poly = |d: usize| ComplexPolynomial::from_raw(
            (0..=d).map(|_| C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect());
        let f = rand_poly(n - 1);
        let g = rand_poly(n - 1);
        let res = inner_product(&f, &g, &hb).unwrap();
        let quad = quadrature_inner(&f, &g, &hb);
        prop_assert!((res - quad).norm() <= 1e-8 * (1.0 + quad.norm()), "{res} vs {quad}");
    }

    #[test]
    fn inner_product_is_hermitian(seed in 0u64..10_000) {
        let hb = random_e(seed, 4);
        let f = cp(&[(1.0, 0.5), (0.0, 1.0), (-0.3, 0.0)]);
        let g = cp(&[(0.2, 0.0), (1.0, -1.0)]);
        let a = inner_product(&f, &g, &hb).unwrap();
        let b = inner_product(&g, &f, &hb).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-8 * (1.0 + a.norm()));
        prop_assert!(inner_product(&f, &f, &hb).unwrap().re > 0.0);
    }
}
