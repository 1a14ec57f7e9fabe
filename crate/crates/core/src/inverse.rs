use crate::debranges::{system_length_from_e, DeBranges, HBPolynomial};
use crate::error::{Error, Result};
use crate::evolve::{accumulated_hamiltonian, monodromy};
use crate::hamiltonian::{Hamiltonian, Segment};
use crate::jacobi::{jacobi_to_hamiltonian, measure_to_jacobi};
use crate::linalg::{Matrix2, Sym2};
use crate::measure::AtomicMeasure;
use crate::poly::{ComplexPolynomial, RealPolynomial};
use crate::quad::gauss_on;
use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const GATE: f64 = 1e-8;
const SIGN_TOL: f64 = 1e-9;

/// One extraction Θ = (I − λS)Ψ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationStep {
    pub s: [[f64; 2]; 2],
    pub segment: Segment,
    pub remainder: HBPolynomial,
    pub fit_residual: f64,
    pub factor_residual: f64,
    /// Relative gap between the kernel-route S and the leading-coefficient S.
    pub kernel_discrepancy: f64,
}

fn real_mat(m: &[[f64; 2]; 2]) -> Matrix2 {
    Matrix2::real(m[0][0], m[0][1], m[1][0], m[1][1])
}

/// Rank-one segment whose monodromy is I + λR.
pub fn segment_from_nilpotent(r: &[[f64; 2]; 2]) -> Result<Segment> {
    nilpotent_segment(r, SIGN_TOL)
}

fn nilpotent_segment(r: &[[f64; 2]; 2], sign_tol: f64) -> Result<Segment> {
    let scale = r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale <= 1e-14 {
        return Err(Error::validation("empty segment: R vanishes"));
    }
    let rm = real_mat(r);
    let sq = (rm * rm).max_abs();
    if sq > sign_tol * scale * scale.max(1.0) {
        return Err(Error::numerical(format!("R is not nilpotent: |R²| = {sq:.3e}")));
    }
    if r[0][1] < -sign_tol * scale.max(1.0) || r[1][0] > sign_tol * scale.max(1.0) {
        return Err(Error::numerical(format!("sign condition violated: R12 = {}, R21 = {}", r[0][1], r[1][0])));
    }
    let a = r[0][1] - r[1][0];
    // R = a[[sc, s²], [−c², −sc]] for e = (c, s); the double angle is linear
    // in the entries, unlike e± = √(·), which amplifies rounding near 0.
    let angle = (0.5 * (2.0 * r[0][0]).atan2(-(r[0][1] + r[1][0]))).rem_euclid(PI);
    let angle = if PI - angle < 1e-15 { 0.0 } else { angle };
    Ok(Segment::rank_one(a, angle))
}

fn coeffs_at(p: &RealPolynomial, q: &RealPolynomial, k: usize) -> (f64, f64) {
    (p.coeff(k), q.coeff(k))
}

/// Extracts the singular interval adjacent to the right endpoint.
pub fn factor_step(hb: &HBPolynomial) -> Result<FactorizationStep> {
    let n = hb.degree();
    if n < 2 {
        return Err(Error::validation("terminal case: degree below 2"));
    }
    hb.require_normalized()?;
    let space = DeBranges::new(hb)?;
    let e = hb.e();
    let es = e.star();
    let cn = e.leading();
    let rot = -cn / cn.conj();
    let x_gen = e.add(&es.scale(rot)).truncate(n - 1);
    let norm = space.norm_sqr(&x_gen)?;
    if !(norm > 0.0) {
        return Err(Error::numerical("degenerate generator of the subspace"));
    }
    let a = C64::new(0.0, -1.0);
    let e_a = e.eval(a);
    let es_a = es.eval(a);
    let xs_a = x_gen.eval(a.conj()).conj();
    let first = es.scale(e_a).sub(&e.scale(es_a)).scale(C64::new(0.0, -1.0 / (2.0 * PI)));
    let lin = ComplexPolynomial::from_raw(vec![-a, C64::new(1.0, 0.0)]);
    let e1_hat_full = first.sub(&lin.mul(&x_gen).scale(xs_a / norm));
    let top = e1_hat_full.coeff(n).norm();
    if top > 1e-6 * e1_hat_full.max_abs() {
        warn!("factor step: dropped leading coefficient {top:.3e} is not small");
    }
    let e1_hat = e1_hat_full.truncate(n - 1);
    let e0 = e1_hat.coeff(0);
    if e0.norm() == 0.0 {
        return Err(Error::numerical("Ê₁(0) vanishes"));
    }
    let e1 = e1_hat.scale(e0.inv());
    let (t1p, t1m) = (e1.real_part(), e1.imag_part());

    let (tp, tm) = (&hb.theta_plus, &hb.theta_minus);
    // Row 0 reads Λ₀(1, 0)ᵀ = Θ₁(0); the other three unknowns per row of
    // Λ₀, Λ₁ come from least squares on the remaining coefficients.
    let rows = n + 1;
    let mut design = DMatrix::<f64>::zeros(rows, 3);
    for k in 1..=rows {
        let m = tm.coeff(k);
        let (p1, m1) = coeffs_at(tp, tm, k - 1);
        design[(k - 1, 0)] = m;
        design[(k - 1, 1)] = p1;
        design[(k - 1, 2)] = m1;
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-13 * smax {
        return Err(Error::numerical(format!("coefficient system singular (σ ratio {:.3e})", smin / smax)));
    }
    let fit_row = |rhs: &RealPolynomial| -> Result<(f64, DVector<f64>, f64)> {
        let alpha = rhs.coeff(0);
        let b = DVector::from_iterator(rows, (1..=rows).map(|k| rhs.coeff(k) - alpha * tp.coeff(k)));
        let x = svd.solve(&b, 1e-15 * smax).map_err(|e| Error::numerical(e.to_string()))?;
        let r = (&design * &x - &b).amax();
        Ok((alpha, x, r))
    };
    let (ap, xp, rp) = fit_row(&t1p)?;
    let (am, xm, rm) = fit_row(&t1m)?;
    let target_scale = t1p.max_abs().max(t1m.max_abs()).max(1.0);
    let fit_residual = rp.max(rm) / target_scale;
    if fit_residual > GATE {
        return Err(Error::numerical(format!("Λ₀, Λ₁ fit residual {fit_residual:.3e}")));
    }
    let xp = [ap, xp[0], xp[1], xp[2]];
    let xm = [am, xm[0], xm[1], xm[2]];
    let l0 = Matrix2::real(xp[0], xp[1], xm[0], xm[1]);
    let l1 = Matrix2::real(xp[2], xp[3], xm[2], xm[3]);
    let l0_inv = l0
        .inverse()
        .filter(|m| m.max_abs() * l0.max_abs() < 1e12)
        .ok_or_else(|| Error::numerical(format!("Λ₀ singular or ill-conditioned: {:?}", l0)))?;
    let s = l0_inv * l1;
    let s_real = [[s.m11.re, s.m12.re], [s.m21.re, s.m22.re]];
    // Rounding in S grows with the size of Θ's coefficients.
    let theta_scale = tp.max_abs().max(tm.max_abs()).max(1.0);
    let tol = SIGN_TOL * theta_scale;
    let smag = s.max_abs().max(1.0);
    if s.det().norm() > tol * smag * smag || s.trace().norm() > tol * smag {
        return Err(Error::numerical(format!(
            "S not nilpotent: det {:.3e}, tr {:.3e}",
            s.det().norm(),
            s.trace().norm()
        )));
    }
    if s_real[0][1] > tol * smag || s_real[1][0] < -tol * smag {
        return Err(Error::numerical(format!("S sign condition violated: {:?}", s_real)));
    }
    let (mut pp, mut pm) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let (a1, b1) = (t1p.coeff(k), t1m.coeff(k));
        pp[k] = l0_inv.m11.re * a1 + l0_inv.m12.re * b1;
        pm[k] = l0_inv.m21.re * a1 + l0_inv.m22.re * b1;
    }
    if (pp[0] - 1.0).abs() > GATE || pm[0].abs() > GATE {
        return Err(Error::numerical(format!("remainder not normalized: Ψ(0) = ({}, {})", pp[0], pm[0])));
    }
    // The factorization is unique, and S also equals −θₙwᵀ with
    // w = Jθₙ/⟨Jθₙ, θₙ₋₁⟩ in terms of the two leading coefficients. That form
    // avoids the cancellation in the kernel route, so it supplies the result
    // and the kernel route is kept as a cross-check.
    let s_lead = leading_nilpotent(tp, tm, n)?;
    let kernel_discrepancy =
        s_lead.iter().flatten().zip(s_real.iter().flatten()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / smag;
    if kernel_discrepancy > 1e-6 * theta_scale {
        return Err(Error::numerical(format!(
            "kernel and leading-coefficient factors disagree: {kernel_discrepancy:.3e}"
        )));
    }
    let s_real = s_lead;
    let x = RealPolynomial::x();
    let psi_p = tp.add(&x.mul(&tp.scale(s_real[0][0]).add(&tm.scale(s_real[0][1])))).truncate(n - 1);
    let psi_m = tm.add(&x.mul(&tp.scale(s_real[1][0]).add(&tm.scale(s_real[1][1])))).truncate(n - 1);
    let factor_residual = reassemble_residual(tp, tm, &s_real, &psi_p, &psi_m);
    if factor_residual > GATE * theta_scale {
        return Err(Error::numerical(format!("Θ ≠ (I − λS)Ψ: residual {factor_residual:.3e}")));
    }
    let remainder =
        HBPolynomial::new(psi_p, psi_m).map_err(|e| Error::numerical(format!("factorization degeneracy: {e}")))?;
    let r = [[-s_real[0][0], -s_real[0][1]], [-s_real[1][0], -s_real[1][1]]];
    let segment = nilpotent_segment(&r, tol)?;
    debug!("factor step: degree {n}, segment {:?}, fit {fit_residual:.2e}", segment);
    Ok(FactorizationStep { s: s_real, segment, remainder, fit_residual, factor_residual, kernel_discrepancy })
}

/// −θₙwᵀ with w = Jθₙ/⟨Jθₙ, θₙ₋₁⟩.
fn leading_nilpotent(tp: &RealPolynomial, tm: &RealPolynomial, n: usize) -> Result<[[f64; 2]; 2]> {
    let (a, b) = (tp.coeff(n), tm.coeff(n));
    let (c, d) = (tp.coeff(n - 1), tm.coeff(n - 1));
    let denom = -b * c + a * d;
    if denom == 0.0 {
        return Err(Error::numerical("leading coefficients are parallel"));
    }
    let w = (-b / denom, a / denom);
    Ok([[-a * w.0, -a * w.1], [-b * w.0, -b * w.1]])
}

fn reassemble_residual(
    tp: &RealPolynomial,
    tm: &RealPolynomial,
    s: &[[f64; 2]; 2],
    pp: &RealPolynomial,
    pm: &RealPolynomial,
) -> f64 {
    let x = RealPolynomial::x();
    let rp = pp.sub(&x.mul(&pp.scale(s[0][0]).add(&pm.scale(s[0][1]))));
    let rm = pm.sub(&x.mul(&pp.scale(s[1][0]).add(&pm.scale(s[1][1]))));
    rp.dist(tp).max(rm.dist(tm))
}

/// Segment for Θ = (1 + aλ, bλ).
pub fn terminal_segment(hb: &HBPolynomial) -> Result<Segment> {
    if hb.degree() != 1 {
        return Err(Error::validation("terminal segment needs degree 1"));
    }
    let (tp, tm) = (&hb.theta_plus, &hb.theta_minus);
    if (tp.coeff(0) - 1.0).abs() > 1e-10 || tm.coeff(0).abs() > 1e-10 {
        return Err(Error::validation("terminal step needs Θ(0) = (1, 0)"));
    }
    let (a, b) = (tp.coeff(1), tm.coeff(1));
    if !(b < 0.0) {
        return Err(Error::validation("not HB: b ≥ 0"));
    }
    segment_from_nilpotent(&[[a, -a * a / b], [b, -a]])
}

/// Same check for raw coefficients, used before HB validation.
pub fn terminal_segment_from(a: f64, b: f64) -> Result<Segment> {
    if !(b < 0.0) {
        return Err(Error::validation("not HB: b ≥ 0"));
    }
    segment_from_nilpotent(&[[a, -a * a / b], [b, -a]])
}

#[derive(Debug, Clone, Serialize)]
pub struct Factorization {
    /// Segments ordered from x = 0.
    pub segments: Vec<Segment>,
    /// Steps in extraction order (first is adjacent to the right end).
    pub steps: Vec<FactorizationStep>,
}

pub fn factorize(hb: &HBPolynomial) -> Result<Factorization> {
    hb.require_normalized()?;
    let mut steps = Vec::new();
    let mut current = hb.clone();
    while current.degree() >= 2 {
        let step = factor_step(&current)?;
        current = step.remainder.clone();
        steps.push(step);
    }
    let mut segments = vec![terminal_segment(&current)?];
    segments.extend(steps.iter().rev().map(|s| s.segment.clone()));
    if let Some(Segment { kind: crate::hamiltonian::SegmentKind::RankOne { angle, .. }, .. }) = segments.first() {
        if angle.cos().abs() <= 1e-12 {
            warn!("condition (L) violated by the reconstructed system");
        }
    }
    Ok(Factorization { segments, steps })
}

/// Rank-one chain whose transfer matrix has first column Θ.
pub fn solve_polynomial_inverse(hb: &HBPolynomial) -> Result<Hamiltonian> {
    let f = factorize(hb)?;
    let n = f.segments.len();
    let h = Hamiltonian::new(f.segments)?;
    if h.segments.len() != n {
        warn!("adjacent parallel segments merged");
    }
    Ok(h)
}

/// c·z·∏(1 − z/t) over `ts` and its quotients by (z − t_j), all built as
/// products so that no deflation error enters.
struct ProductForm {
    whole: RealPolynomial,
    quotients: Vec<RealPolynomial>,
}

fn product_form(c: f64, ts: &[f64]) -> ProductForm {
    let factor = |t: f64| RealPolynomial::from_raw(vec![1.0, -1.0 / t]);
    let build = |skip: Option<usize>| {
        ts.iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .fold(RealPolynomial::constant(c), |p, (_, &t)| p.mul(&factor(t)))
    };
    let whole = build(None).shift(1);
    let mut quotients = vec![build(None)];
    quotients.extend((0..ts.len()).map(|j| build(Some(j)).shift(1).scale(-1.0 / ts[j])));
    ProductForm { whole, quotients }
}

/// Θ from atoms: Θ₋ = −(1/μ₀) z ∏(1 − z/t), Θ₊ by the Herglotz sum with c₁ = 0.
pub fn theta_from_atoms(mu: &AtomicMeasure, d1: f64) -> Result<HBPolynomial> {
    let mu0 = mu.mass_at(0.0).ok_or_else(|| {
        Error::validation("measure must be supported on finitely many points and such that μ({0}) ≠ 0")
    })?;
    let nonzero: Vec<f64> = mu.atoms.iter().map(|a| a.t).filter(|&t| t != 0.0).collect();
    let form = product_form(-1.0 / mu0, &nonzero);
    let tm = form.whole.clone();
    let dtm = tm.derivative();
    let mut tp = tm.scale(d1);
    let mut quotients = form.quotients.iter();
    let q0 = quotients.next().unwrap();
    // Θ̇₋(t_j) equals the quotient evaluated at t_j
    tp = tp.add(&q0.scale(-1.0 / (mu0 * q0.eval(0.0).powi(2))));
    for (&t, q) in nonzero.iter().zip(quotients) {
        let d = q.eval(t);
        tp = tp.add(&q.scale(-1.0 / (mu.mass_at(t).unwrap() * d * d)));
    }
    let hb = HBPolynomial::new(tp, tm)?;
    // The monomial representation limits the attainable residual to about
    // ε times the evaluation condition number Σ|a_k||t|^k / |p(t)|.
    let cond = |p: &RealPolynomial, t: f64| {
        let abs = RealPolynomial::from_raw(p.coeffs.iter().map(|c| c.abs()).collect());
        abs.eval(t.abs()) / p.eval_compensated(t).abs()
    };
    let mut worst = 0.0f64;
    for a in &mu.atoms {
        let w = -1.0 / (hb.theta_plus.eval_compensated(a.t) * dtm.eval_compensated(a.t));
        let gate = (1e2 * f64::EPSILON * (cond(&hb.theta_plus, a.t) + cond(&dtm, a.t))).max(1e-10);
        let r = (w - a.w).abs() / a.w;
        debug!("atom {}: weight residual {r:.3e}, gate {gate:.3e}", a.t);
        worst = worst.max(r / gate);
    }
    if worst > 1.0 {
        return Err(Error::numerical(format!("weight consistency residual {:.3e} of its gate", worst)));
    }
    Ok(hb)
}

pub fn solve_finite_measure_inverse(mu: &AtomicMeasure, d1: f64) -> Result<Hamiltonian> {
    solve_polynomial_inverse(&theta_from_atoms(mu, d1)?)
}

/// Finite-measure inverse through the Jacobi matrix of μ. The seed e₁ is
/// chosen so that m(z) = Φ₋(L, z)/Θ₋(L, z) equals
/// Σ w (1/(t − z) − t/(1 + t²)) + c; the atom at 0 forces the right
/// boundary direction to be (0, 1). Unlike the polynomial route this stays
/// accurate when the residues of Θ₊/Θ₋ span many orders of magnitude.
pub fn solve_measure_inverse_stieltjes(mu: &AtomicMeasure, c: f64) -> Result<Hamiltonian> {
    if mu.mass_at(0.0).is_none() {
        return Err(Error::validation("measure must have an atom at 0 (μ({0}) ≠ 0)"));
    }
    let (jm, total) = measure_to_jacobi(mu)?;
    let shift: f64 = mu.atoms.iter().map(|a| a.w * a.t / (1.0 + a.t * a.t)).sum();
    let theta = (c - shift).atan();
    let delta1 = 1.0 / (total * theta.cos().powi(2));
    let chain = jacobi_to_hamiltonian(&jm, [theta.cos(), theta.sin()], delta1)?;
    if chain.right[0].abs() > 1e-8 {
        return Err(Error::numerical(format!("right boundary direction {:?} is not vertical", chain.right)));
    }
    chain.to_hamiltonian()
}

/// Spectral data of a regular HB function: zeros of Θ₋ (t₀ = 0), Herglotz
/// residues of Θ₊/Θ₋, affine part a + bz and Θ̇₋(0). An optional model
/// system evaluates E itself for the length formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularHBSpec {
    pub zeros: Vec<f64>,
    pub residues: Vec<f64>,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    pub theta_minus_prime_zero: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Hamiltonian>,
}

impl RegularHBSpec {
    pub fn validate(&self) -> Result<()> {
        if self.zeros.is_empty() || self.zeros[0] != 0.0 {
            return Err(Error::validation("first zero must be t₀ = 0"));
        }
        if self.zeros.len() != self.residues.len() {
            return Err(Error::validation("zeros and residues differ in length"));
        }
        if self.zeros.windows(2).any(|w| w[1].abs() < w[0].abs()) {
            return Err(Error::validation("|t_j| must be non-decreasing"));
        }
        if self.residues.iter().any(|&m| !(m < 0.0)) {
            return Err(Error::validation("Herglotz residues must be negative"));
        }
        if self.b < 0.0 || !(self.theta_minus_prime_zero < 0.0) {
            return Err(Error::validation("need b ≥ 0 and Θ̇₋(0) < 0"));
        }
        Ok(())
    }

    /// Free system on (0, length): t_j = 2πj/L, μ_j = −2/L, ordered by |t|.
    pub fn free(length: f64, count: usize) -> Self {
        let mut zeros = vec![0.0];
        let mut j = 1;
        while zeros.len() < count {
            let t = 2.0 * PI * j as f64 / length;
            zeros.push(-t);
            if zeros.len() < count {
                zeros.push(t);
            }
            j += 1;
        }
        Self {
            residues: vec![-2.0 / length; zeros.len()],
            zeros,
            a: 0.0,
            b: 0.0,
            theta_minus_prime_zero: -length / 2.0,
            model: Some(Hamiltonian::free(length)),
        }
    }

    /// Θ±ᴺ built from the first `n` zeros.
    pub fn truncation(&self, n: usize) -> Result<HBPolynomial> {
        let n = n.min(self.zeros.len()).max(1);
        let form = product_form(self.theta_minus_prime_zero, &self.zeros[1..n]);
        let tm = form.whole;
        let mut tp = tm.mul(&RealPolynomial::from_raw(vec![self.a, self.b]));
        for (q, &m) in form.quotients.iter().zip(&self.residues) {
            tp = tp.add(&q.scale(m));
        }
        HBPolynomial::new(tp, tm).map_err(|e| Error::numerical(format!("truncation N = {n} is not HB: {e}")))
    }
}

fn ln_e_modulus(h: &Hamiltonian, t: f64) -> (C64, f64) {
    let m = monodromy(h, C64::new(t, 0.0), h.total_length()).expect("finite model");
    (m.m11, (m.m11 + C64::new(0.0, 1.0) * m.m21).norm_sqr())
}

/// (1/π)‖(Θ₊ − 1)/λ‖² − Θ̇₋(0) with E taken from a model system; the tail
/// beyond |t| = T uses the mean of t²g over [T, 2T].
pub fn length_from_model(h: &Hamiltonian, theta_minus_prime_zero: f64) -> f64 {
    let g = |t: f64| {
        let (tp, e2) = ln_e_modulus(h, t);
        if t.abs() < 1e-6 {
            let d = monodromy(h, C64::new(1e-6, 0.0), h.total_length()).unwrap();
            let dtp = (d.m11.re - 1.0) / 1e-6;
            return dtp * dtp / e2;
        }
        (tp - 1.0).norm_sqr() / (t * t * e2)
    };
    let tmax = 1e4;
    let panel = 0.5;
    let mut total = 0.0;
    let panels = (tmax / panel) as usize;
    for k in 0..panels {
        let (a, b) = (k as f64 * panel, (k + 1) as f64 * panel);
        for (t, w) in gauss_on(a, b, 8) {
            total += w * (g(t) + g(-t));
        }
    }
    let mut mean = 0.0;
    let samples = 4000;
    for k in 0..samples {
        let t = tmax * (1.0 + (k as f64 + 0.5) / samples as f64);
        mean += t * t * (g(t) + g(-t));
    }
    mean /= samples as f64;
    total += mean / tmax;
    total / PI - theta_minus_prime_zero
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularInverse {
    /// Difference quotients of F on the grid, one constant piece per cell.
    pub hamiltonian: Hamiltonian,
    pub grid: Vec<f64>,
    pub f: Vec<Sym2>,
    pub length: f64,
    pub approximant_lengths: Vec<f64>,
    /// ‖F_n − F_{n−1}‖ over the grid for n = 2..N.
    pub cauchy: Vec<f64>,
    pub warnings: Vec<String>,
}

fn shifted_integral(h: &Hamiltonian, length: f64, grid: &[f64]) -> Result<Vec<Sym2>> {
    let ln = h.total_length();
    let (pad, offset) = if ln < length { (length - ln, 0.0) } else { (0.0, ln - length) };
    let at = |x: f64| -> Result<Sym2> {
        // ∫₀ˣ of the padded system, with diag(0, 1) on the first `pad` units
        if x <= pad {
            return Ok(Sym2::diag(0.0, x));
        }
        let inner = accumulated_hamiltonian(h, (x - pad).min(ln))?;
        Ok(Sym2::diag(0.0, pad).add(&inner))
    };
    let base = at(offset)?;
    grid.iter().map(|&x| Ok(at(offset + x)?.add(&base.scale(-1.0)))).collect()
}

pub fn regular_inverse(spec: &RegularHBSpec, n: usize, grid_n: usize) -> Result<RegularInverse> {
    spec.validate()?;
    if n < 1 || grid_n < 2 {
        return Err(Error::validation("need N ≥ 1 and grid_n ≥ 2"));
    }
    let n = n.min(spec.zeros.len());
    let mut warnings = Vec::new();
    let mut systems = Vec::with_capacity(n);
    for k in 1..=n {
        let hb = spec.truncation(k)?;
        let h = solve_polynomial_inverse(&hb).map_err(|e| Error::numerical(format!("N = {k}: {e}")))?;
        systems.push((hb, h));
    }
    let length = match &spec.model {
        Some(m) => length_from_model(m, spec.theta_minus_prime_zero),
        None => system_length_from_e(&systems.last().unwrap().0)?,
    };
    let grid: Vec<f64> = (0..grid_n).map(|k| length * k as f64 / (grid_n - 1) as f64).collect();
    let mut fs = Vec::with_capacity(n);
    let mut approximant_lengths = Vec::with_capacity(n);
    for (_, h) in &systems {
        let ln = h.total_length();
        approximant_lengths.push(ln);
        fs.push(shifted_integral(h, length, &grid)?);
    }
    if approximant_lengths.last().is_some_and(|&l| l < length) {
        warnings.push("final approximant padded with diag(0, 1); condition (L) fails for it".to_string());
    }
    let cauchy =
        fs.windows(2).map(|w| w[0].iter().zip(w[1].iter()).fold(0.0f64, |m, (a, b)| m.max(a.dist(b)))).collect();
    let f = fs.pop().unwrap();
    let hamiltonian = difference_quotient(&grid, &f)?;
    Ok(RegularInverse { hamiltonian, grid, f, length, approximant_lengths, cauchy, warnings })
}

/// Piecewise-constant Hamiltonian with ∫ equal to `f` at the grid nodes.
pub fn difference_quotient(grid: &[f64], f: &[Sym2]) -> Result<Hamiltonian> {
    let segs = grid
        .windows(2)
        .zip(f.windows(2))
        .map(|(x, v)| {
            let dx = x[1] - x[0];
            let m = v[1].add(&v[0].scale(-1.0)).scale(1.0 / dx);
            let lam = m.min_eigenvalue();
            let m = if lam < 0.0 { Sym2::new(m.a - lam, m.b, m.c - lam) } else { m };
            Segment::constant(dx, m)
        })
        .collect();
    Hamiltonian::new(segs)
}
