mod common;

use canon_core::debranges::{system_length_from_e, HBPolynomial};
use canon_core::evolve::{accumulated_hamiltonian, monodromy, singular_interval_monodromy, spectral_measure_alpha};
use canon_core::hamiltonian::{Hamiltonian, Segment, SegmentKind};
use canon_core::inverse::*;
use canon_core::measure::AtomicMeasure;
use canon_core::{RealPolynomial, C64};
use common::rng;
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn rp(c: &[f64]) -> RealPolynomial {
    RealPolynomial::from_raw(c.to_vec())
}

fn rank_one(seg: &Segment) -> (f64, f64) {
    match seg.kind {
        SegmentKind::RankOne { angle, .. } => (seg.length, angle),
        _ => panic!("expected a rank-one segment"),
    }
}

fn assert_segment(seg: &Segment, length: f64, angle: f64) {
    let (l, a) = rank_one(seg);
    assert!((l - length).abs() < 1e-10, "length {l} vs {length}");
    let d = (a - angle).rem_euclid(PI);
    assert!(d.min(PI - d) < 1e-9, "angle {a} vs {angle}");
}

fn random_measure(r: &mut rand_chacha::ChaCha8Rng) -> AtomicMeasure {
    let k = r.gen_range(1..=6);
    let mut pts = vec![(0.0, r.gen_range(0.2..3.0))];
    while pts.len() < k {
        let t: f64 = r.gen_range(-5.0..5.0);
        if pts.iter().all(|p: &(f64, f64)| (p.0 - t).abs() > 0.1) {
            pts.push((t, r.gen_range(0.2..3.0)));
        }
    }
    AtomicMeasure::from_pairs(&pts).unwrap()
}

fn first_column_residual(h: &Hamiltonian, hb: &HBPolynomial) -> f64 {
    let l = h.total_length();
    [C64::new(0.3, 0.0), C64::new(-1.0, 0.5), C64::new(0.7, -1.2), C64::new(2.0, 2.0)]
        .iter()
        .map(|&z| {
            let m = monodromy(h, z, l).unwrap();
            let tp = hb.theta_plus.eval_c(z);
            let tm = hb.theta_minus.eval_c(z);
            ((m.m11 - tp).norm() + (m.m21 - tm).norm()) / (1.0 + tp.norm() + tm.norm())
        })
        .fold(0.0, f64::max)
}

#[test]
fn nilpotent_examples() {
    assert_segment(&segment_from_nilpotent(&[[0.0, 1.0], [0.0, 0.0]]).unwrap(), 1.0, FRAC_PI_2);
    assert_segment(&segment_from_nilpotent(&[[0.0, 0.0], [-1.0, 0.0]]).unwrap(), 1.0, 0.0);
    assert_segment(&segment_from_nilpotent(&[[1.0, 1.0], [-1.0, -1.0]]).unwrap(), 2.0, PI / 4.0);
    assert!(segment_from_nilpotent(&[[0.0, 0.0], [0.0, 0.0]]).unwrap_err().is_validation());
}

#[test]
fn nilpotent_segment_reproduces_its_factor() {
    let mut r = rng(3);
    for _ in 0..20 {
        let a: f64 = r.gen_range(0.1..3.0);
        let phi: f64 = r.gen_range(0.0..PI);
        let (c, s) = (phi.cos(), phi.sin());
        // I + λR with R = a·(c, s)(c, s)ᵀJ
        let rm = [[a * c * s, a * c * c], [-a * s * s, -a * c * s]];
        let seg = segment_from_nilpotent(&rm).unwrap();
        let (l, ang) = rank_one(&seg);
        let lam = C64::new(0.4, -0.9);
        let m = singular_interval_monodromy(l, (ang.cos(), ang.sin()), lam);
        let want = [[1.0 + 0.0 * a, 0.0], [0.0, 1.0]];
        let err = (m.m11 - (want[0][0] + lam * rm[0][0])).norm()
            + (m.m12 - lam * rm[0][1]).norm()
            + (m.m21 - lam * rm[1][0]).norm()
            + (m.m22 - (want[1][1] + lam * rm[1][1])).norm();
        assert!(err < 1e-9, "{err}");
    }
}

#[test]
fn terminal_examples() {
    let t = |a: f64, b: f64| HBPolynomial::new(rp(&[1.0, a]), rp(&[0.0, b]));
    assert_segment(&terminal_segment(&t(0.0, -1.0).unwrap()).unwrap(), 1.0, 0.0);
    assert_segment(&terminal_segment(&t(1.0, -1.0).unwrap()).unwrap(), 2.0, PI / 4.0);
    assert!(terminal_segment_from(0.0, 1.0).is_err());
}

#[test]
fn square_factor_step() {
    let hb = HBPolynomial::new(rp(&[1.0, 0.0, -1.0]), rp(&[0.0, -2.0])).unwrap();
    let step = factor_step(&hb).unwrap();
    let want = [[0.0, -0.5], [0.0, 0.0]];
    for (got, want) in step.s.iter().flatten().zip(want.iter().flatten()) {
        assert!((got - want).abs() < 1e-10, "{:?}", step.s);
    }
    assert!(step.remainder.theta_plus.dist(&rp(&[1.0])) < 1e-10);
    assert!(step.remainder.theta_minus.dist(&rp(&[0.0, -2.0])) < 1e-10);
    let linear = HBPolynomial::new(rp(&[1.0]), rp(&[0.0, -1.0])).unwrap();
    assert!(factor_step(&linear).unwrap_err().to_string().contains("terminal case"));
}

#[test]
fn polynomial_inverse_examples() {
    let linear = HBPolynomial::new(rp(&[1.0]), rp(&[0.0, -1.0])).unwrap();
    let h = solve_polynomial_inverse(&linear).unwrap();
    assert_eq!(h.segments.len(), 1);
    assert_segment(&h.segments[0], 1.0, 0.0);

    let hb = HBPolynomial::new(rp(&[1.0, 0.0, -1.0]), rp(&[0.0, -2.0])).unwrap();
    let h = solve_polynomial_inverse(&hb).unwrap();
    assert_eq!(h.segments.len(), 2);
    assert_segment(&h.segments[0], 2.0, 0.0);
    assert_segment(&h.segments[1], 0.5, FRAC_PI_2);
    assert!((h.total_length() - system_length_from_e(&hb).unwrap()).abs() < 1e-10);
}

#[test]
fn extracted_factors_satisfy_sign_conditions_and_telescope() {
    let mut r = rng(11);
    for _ in 0..20 {
        let mu = random_measure(&mut r);
        let hb = theta_from_atoms(&mu, 0.0).unwrap();
        let f = factorize(&hb).unwrap();
        // (∏(I − λS_j)) Ψ_k = Θ, built up from the innermost remainder outwards
        let (mut p, mut m) = (hb.theta_plus.clone(), hb.theta_minus.clone());
        for step in &f.steps {
            let s = step.s;
            let sc = 1.0 + s.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!((s[0][0] * s[1][1] - s[0][1] * s[1][0]).abs() < 1e-9 * sc * sc);
            assert!((s[0][0] + s[1][1]).abs() < 1e-9 * sc);
            assert!(s[0][1] <= 1e-9 * sc && s[1][0] >= -1e-9 * sc);
            let x = RealPolynomial::x();
            let (pp, pm) = (&step.remainder.theta_plus, &step.remainder.theta_minus);
            let rebuilt_p = pp.sub(&x.mul(&pp.scale(s[0][0]).add(&pm.scale(s[0][1]))));
            let rebuilt_m = pm.sub(&x.mul(&pp.scale(s[1][0]).add(&pm.scale(s[1][1]))));
            let scale = p.max_abs().max(m.max_abs()).max(1.0);
            assert!(rebuilt_p.dist(&p) < 1e-7 * scale && rebuilt_m.dist(&m) < 1e-7 * scale);
            p = pp.clone();
            m = pm.clone();
        }
        assert_eq!(f.segments.len(), hb.degree());
    }
}

#[test]
fn theta_from_atoms_examples() {
    let one = AtomicMeasure::from_pairs(&[(0.0, 1.0)]).unwrap();
    let hb = theta_from_atoms(&one, 0.0).unwrap();
    assert!(hb.theta_plus.dist(&rp(&[1.0])) < 1e-14 && hb.theta_minus.dist(&rp(&[0.0, -1.0])) < 1e-14);

    let two = AtomicMeasure::from_pairs(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
    let hb = theta_from_atoms(&two, 0.0).unwrap();
    assert!(hb.theta_minus.dist(&rp(&[0.0, -1.0, 1.0])) < 1e-14);
    assert!(hb.theta_plus.dist(&rp(&[1.0, -2.0])) < 1e-14);
    let dtm = hb.theta_minus.derivative();
    for t in [0.0, 1.0] {
        assert!((-1.0 / (hb.theta_plus.eval(t) * dtm.eval(t)) - 1.0).abs() < 1e-12);
    }

    let err = theta_from_atoms(&AtomicMeasure::from_pairs(&[(1.0, 1.0)]).unwrap(), 0.0).unwrap_err();
    assert!(err.to_string().contains("μ({0}) ≠ 0"));
    assert!(AtomicMeasure::from_pairs(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
}

#[test]
fn finite_measure_inverse_examples() {
    let h = solve_finite_measure_inverse(&AtomicMeasure::from_pairs(&[(0.0, 1.0)]).unwrap(), 0.0).unwrap();
    assert_eq!(h.segments.len(), 1);
    assert_segment(&h.segments[0], 1.0, 0.0);
}

fn roundtrip_error(mu: &AtomicMeasure, d1: f64) -> (f64, f64) {
    let h = solve_finite_measure_inverse(mu, d1).unwrap();
    let got = spectral_measure_alpha(&h, FRAC_PI_2, (-6.0, 6.0)).unwrap();
    assert_eq!(got.len(), mu.len(), "{:?} vs {:?}", got, mu);
    mu.atoms
        .iter()
        .zip(&got.atoms)
        .fold((0.0f64, 0.0f64), |(dt, dw), (a, b)| (dt.max((a.t - b.t).abs()), dw.max((a.w - b.w).abs() / a.w)))
}

#[test]
fn measure_roundtrip_on_random_measures() {
    let mut r = rng(2024);
    for _ in 0..50 {
        let mu = random_measure(&mut r);
        let (dt, dw) = roundtrip_error(&mu, 0.0);
        assert!(dt < 1e-7 && dw < 1e-6, "{mu:?}: {dt:.2e} {dw:.2e}");
    }
}

#[test]
fn spectral_measure_is_independent_of_d1() {
    let mut r = rng(77);
    for _ in 0..8 {
        let mu = random_measure(&mut r);
        let hs: Vec<Hamiltonian> = [-1.0, 0.0, 1.0]
            .iter()
            .map(|&d1| {
                let (dt, dw) = roundtrip_error(&mu, d1);
                assert!(dt < 1e-7 && dw < 1e-6);
                solve_finite_measure_inverse(&mu, d1).unwrap()
            })
            .collect();
        if mu.len() > 1 {
            assert_ne!(hs[0], hs[2]);
        }
    }
}

#[test]
fn polynomial_inverse_reproduces_monodromy() {
    let mut r = rng(99);
    for _ in 0..30 {
        let mu = random_measure(&mut r);
        let d1 = r.gen_range(-1.0..1.0);
        let hb = theta_from_atoms(&mu, d1).unwrap();
        let h = solve_polynomial_inverse(&hb).unwrap();
        assert_eq!(h.segments.len(), hb.degree());
        assert!(first_column_residual(&h, &hb) < 1e-7);
        if let Some(seg) = h.segments.first() {
            let (_, a) = rank_one(seg);
            assert!(a.cos().abs() > 1e-12, "condition (L)");
        }
    }
}

#[test]
fn regular_inverse_on_a_polynomial_spec_is_the_polynomial_inverse() {
    let mu = AtomicMeasure::from_pairs(&[(0.0, 1.0), (1.0, 0.5), (-2.0, 2.0)]).unwrap();
    let hb = theta_from_atoms(&mu, 0.0).unwrap();
    let herg = canon_core::debranges::herglotz_decomposition(&hb).unwrap();
    let mut order: Vec<usize> = (0..herg.poles.len()).collect();
    order.sort_by(|&i, &j| herg.poles[i].abs().partial_cmp(&herg.poles[j].abs()).unwrap());
    let spec = RegularHBSpec {
        zeros: order.iter().map(|&i| if herg.poles[i].abs() < 1e-14 { 0.0 } else { herg.poles[i] }).collect(),
        residues: order.iter().map(|&i| herg.residues[i]).collect(),
        a: herg.a,
        b: herg.b,
        theta_minus_prime_zero: hb.theta_minus.coeff(1),
        model: None,
    };
    let direct = solve_polynomial_inverse(&hb).unwrap();
    let l = direct.total_length();
    for n in [3, 5] {
        let inv = regular_inverse(&spec, n, 33).unwrap();
        assert!((inv.length - l).abs() < 1e-9);
        for (x, f) in inv.grid.iter().zip(&inv.f) {
            assert!(f.dist(&accumulated_hamiltonian(&direct, *x).unwrap()) < 1e-8);
        }
    }
}

fn free_sup_error(inv: &RegularInverse) -> f64 {
    inv.grid.iter().zip(&inv.f).map(|(&x, f)| f.dist(&canon_core::Sym2::diag(x / 2.0, x / 2.0))).fold(0.0, f64::max)
}

#[test]
fn free_spec_length_and_convergence() {
    let spec = RegularHBSpec::free(PI, 30);
    let errors: Vec<f64> = [10, 20, 30]
        .iter()
        .map(|&n| {
            let inv = regular_inverse(&spec, n, 64).unwrap();
            assert!((inv.length - PI).abs() < 1e-6, "L = {}", inv.length);
            assert_eq!(inv.cauchy.len(), n - 1);
            // F_N(L) = ∫ over the whole padded approximant
            let end = inv.f.last().unwrap();
            assert!((end.trace() - PI).abs() < 1e-9);
            free_sup_error(&inv)
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn regular_spec_validation() {
    let mut spec = RegularHBSpec::free(2.0, 4);
    spec.residues[1] = 0.5;
    assert!(regular_inverse(&spec, 4, 8).unwrap_err().is_validation());
    let mut spec = RegularHBSpec::free(2.0, 4);
    spec.zeros[0] = 0.1;
    assert!(regular_inverse(&spec, 4, 8).is_err());
}

#[test]
fn stieltjes_route_roundtrips_random_measures() {
    let mut r = rng(99);
    for _ in 0..30 {
        let mu = random_measure(&mut r);
        let h = solve_measure_inverse_stieltjes(&mu, 0.0).unwrap();
        let got = spectral_measure_alpha(&h, FRAC_PI_2, (-6.0, 6.0)).unwrap();
        assert_eq!(got.len(), mu.len());
        for (a, b) in mu.atoms.iter().zip(&got.atoms) {
            assert!((a.t - b.t).abs() < 1e-7 && (a.w - b.w).abs() < 1e-6 * a.w, "{mu:?} vs {got:?}");
        }
    }
}

#[test]
fn stieltjes_route_reproduces_the_herglotz_function() {
    let mut r = rng(5);
    for c in [-1.5, 0.0, 0.8] {
        let mu = random_measure(&mut r);
        let h = solve_measure_inverse_stieltjes(&mu, c).unwrap();
        for z in [C64::new(0.3, 1.0), C64::new(-2.0, 0.4), C64::new(1.0, -0.7)] {
            let m = monodromy(&h, z, h.total_length()).unwrap();
            let expected: C64 =
                mu.atoms.iter().map(|a| a.w * (1.0 / (a.t - z) - a.t / (1.0 + a.t * a.t))).sum::<C64>() + c;
            assert!((m.m22 / m.m21 - expected).norm() < 1e-8 * (1.0 + expected.norm()));
        }
    }
}

#[test]
fn stieltjes_route_handles_wide_residue_ranges() {
    // Equally spaced atoms with a small central mass: the polynomial route
    // loses the strict HB property here.
    let mut pts: Vec<(f64, f64)> = (-8..=8).filter(|&k| k != 0).map(|k| (2.0 * k as f64, 2.0 / PI)).collect();
    pts.push((0.0, 1.0 / (16.0 * PI)));
    let mu = AtomicMeasure::from_pairs(&pts).unwrap();
    let h = solve_measure_inverse_stieltjes(&mu, 0.0).unwrap();
    let got = spectral_measure_alpha(&h, FRAC_PI_2, (-20.0, 20.0)).unwrap();
    assert_eq!(got.len(), mu.len());
    for (a, b) in mu.atoms.iter().zip(&got.atoms) {
        assert!((a.t - b.t).abs() < 1e-7 && (a.w - b.w).abs() < 1e-6 * a.w);
    }
}

#[test]
fn stieltjes_route_needs_an_atom_at_zero() {
    let mu = AtomicMeasure::from_pairs(&[(1.0, 1.0), (-2.0, 0.5)]).unwrap();
    assert!(solve_measure_inverse_stieltjes(&mu, 0.0).unwrap_err().is_validation());
}
