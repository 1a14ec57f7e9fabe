use crate::error::{Error, Result};
use crate::evolve::monodromy_scaled;
use crate::hamiltonian::Hamiltonian;
use crate::poly::{ComplexPolynomial, Poly, RealPolynomial};
use crate::roots::{poly_complex_roots, poly_real_roots};
use log::warn;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const HB_MARGIN: f64 = 1e-10;
const CLUSTER: f64 = 1e-6;
const CONTOUR_POINTS: usize = 256;

/// E = Θ₊ + iΘ₋ with real Θ±.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HBPolynomial {
    pub theta_plus: RealPolynomial,
    pub theta_minus: RealPolynomial,
    pub normalized: bool,
}

#[derive(Deserialize)]
struct RawHB {
    theta_plus: RealPolynomial,
    theta_minus: RealPolynomial,
    #[serde(default)]
    normalized: bool,
}

impl<'de> Deserialize<'de> for HBPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawHB::deserialize(d)?;
        let hb =
            HBPolynomial::new(RealPolynomial::new(raw.theta_plus.coeffs), RealPolynomial::new(raw.theta_minus.coeffs))
                .map_err(serde::de::Error::custom)?;
        if raw.normalized && !hb.normalized {
            return Err(serde::de::Error::custom("flagged normalized but E(0) ≠ 1"));
        }
        Ok(hb)
    }
}

pub fn e_from_theta(theta_plus: &RealPolynomial, theta_minus: &RealPolynomial) -> ComplexPolynomial {
    let n = theta_plus.coeffs.len().max(theta_minus.coeffs.len());
    Poly::from_raw((0..n).map(|k| C64::new(theta_plus.coeff(k), theta_minus.coeff(k))).collect())
}

pub fn theta_from_e(e: &ComplexPolynomial) -> (RealPolynomial, RealPolynomial) {
    (e.real_part(), e.imag_part())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HbCheck {
    pub is_hb: bool,
    /// −max Im(root).
    pub margin: f64,
}

pub fn is_hermite_biehler(e: &ComplexPolynomial) -> Result<HbCheck> {
    let roots = poly_complex_roots(e)?;
    let margin = -roots.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.im));
    Ok(HbCheck { is_hb: margin > HB_MARGIN, margin })
}

impl HBPolynomial {
    /// Validates strict Hermite–Biehler.
    pub fn new(theta_plus: RealPolynomial, theta_minus: RealPolynomial) -> Result<Self> {
        let e = e_from_theta(&theta_plus, &theta_minus);
        if e.degree() < 1 {
            return Err(Error::validation("HB polynomial must have degree at least 1"));
        }
        let check = is_hermite_biehler(&e)?;
        if !check.is_hb {
            return Err(Error::validation(format!(
                "not strict Hermite–Biehler: a root of E has Im = {:.3e}",
                -check.margin
            )));
        }
        let normalized = (e.coeff(0) - C64::new(1.0, 0.0)).norm() <= 1e-10;
        Ok(Self { theta_plus, theta_minus, normalized })
    }

    pub fn from_e(e: &ComplexPolynomial) -> Result<Self> {
        let (p, m) = theta_from_e(e);
        Self::new(p, m)
    }

    pub fn e(&self) -> ComplexPolynomial {
        e_from_theta(&self.theta_plus, &self.theta_minus)
    }

    pub fn e_star(&self) -> ComplexPolynomial {
        self.e().star()
    }

    pub fn degree(&self) -> usize {
        self.e().degree()
    }

    pub fn require_normalized(&self) -> Result<()> {
        if !self.normalized {
            return Err(Error::validation("E(0) must equal 1"));
        }
        Ok(())
    }
}

/// H(E) for a strict HB polynomial E, with the zeros of E cached.
#[derive(Debug, Clone)]
pub struct DeBranges {
    pub hb: HBPolynomial,
    e: ComplexPolynomial,
    e_star: ComplexPolynomial,
    e_star_prime: ComplexPolynomial,
    zeros: Vec<C64>,
    clusters: Vec<Vec<usize>>,
}

impl DeBranges {
    pub fn new(hb: &HBPolynomial) -> Result<Self> {
        let e = hb.e();
        let zeros = poly_complex_roots(&e)?;
        let poles: Vec<C64> = zeros.iter().map(|z| z.conj()).collect();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (i, p) in poles.iter().enumerate() {
            let near =
                clusters.iter_mut().find(|c| c.iter().any(|&j| (poles[j] - p).norm() <= CLUSTER * (1.0 + p.norm())));
            match near {
                Some(c) => c.push(i),
                None => clusters.push(vec![i]),
            }
        }
        let e_star = e.star();
        Ok(Self { hb: hb.clone(), e_star_prime: e_star.derivative(), e, e_star, zeros, clusters })
    }

    pub fn degree(&self) -> usize {
        self.e.degree()
    }

    pub fn zeros(&self) -> &[C64] {
        &self.zeros
    }

    fn integrand(&self, f: &ComplexPolynomial, g: &ComplexPolynomial, z: C64) -> C64 {
        f.eval(z) * g.star().eval(z) / (self.e.eval(z) * self.e_star.eval(z))
    }

    /// ∫ f conj(g) / |E|² over ℝ, by residues at the zeros of E*.
    pub fn inner(&self, f: &ComplexPolynomial, g: &ComplexPolynomial) -> Result<C64> {
        let n = self.degree();
        if f.degree() + 1 > n || g.degree() + 1 > n {
            return Err(Error::validation(format!(
                "not in H(E): degrees {} and {} exceed {}",
                f.degree(),
                g.degree(),
                n - 1
            )));
        }
        let gs = g.star();
        let mut sum = C64::new(0.0, 0.0);
        for cluster in &self.clusters {
            if cluster.len() == 1 {
                let p = self.zeros[cluster[0]].conj();
                sum += f.eval(p) * gs.eval(p) / (self.e.eval(p) * self.e_star_prime.eval(p));
            } else {
                sum += self.contour_residue(f, g, cluster);
            }
        }
        Ok(sum * C64::new(0.0, 2.0 * PI))
    }

    fn contour_residue(&self, f: &ComplexPolynomial, g: &ComplexPolynomial, cluster: &[usize]) -> C64 {
        let pts: Vec<C64> = cluster.iter().map(|&i| self.zeros[i].conj()).collect();
        let center = pts.iter().sum::<C64>() / pts.len() as f64;
        let diam = pts.iter().fold(0.0f64, |m, p| m.max((p - center).norm()));
        let mut clearance = f64::INFINITY;
        for (i, z) in self.zeros.iter().enumerate() {
            clearance = clearance.min((z - center).norm());
            if !cluster.contains(&i) {
                clearance = clearance.min((z.conj() - center).norm());
            }
        }
        let radius = (0.5 * clearance).max(10.0 * diam);
        warn!("clustered poles near {:.6e}{:+.6e}i: contour integral with radius {radius:.3e}", center.re, center.im);
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..CONTOUR_POINTS {
            let w = C64::from_polar(radius, 2.0 * PI * (k as f64 + 0.5) / CONTOUR_POINTS as f64);
            acc += self.integrand(f, g, center + w) * w;
        }
        acc / CONTOUR_POINTS as f64
    }

    pub fn norm_sqr(&self, f: &ComplexPolynomial) -> Result<f64> {
        Ok(self.inner(f, f)?.re)
    }

    /// K_λ as a polynomial in z.
    pub fn kernel_polynomial(&self, lambda: C64) -> ComplexPolynomial {
        let lb = lambda.conj();
        let tp = self.hb.theta_plus.to_complex();
        let tm = self.hb.theta_minus.to_complex();
        let num = tm.scale(tp.eval(lb)).sub(&tp.scale(tm.eval(lb)));
        let (q, _) = num.deflate(lb);
        q.scale(C64::new(-1.0 / PI, 0.0))
    }

    pub fn kernel(&self, lambda: C64, z: C64) -> C64 {
        let lb = lambda.conj();
        if (lb - z).norm() < 1e-4 * (1.0 + lambda.norm()) {
            return self.kernel_polynomial(lambda).eval(z);
        }
        let tp = &self.hb.theta_plus;
        let tm = &self.hb.theta_minus;
        (tm.eval_c(z) * tp.eval_c(lb) - tp.eval_c(z) * tm.eval_c(lb)) / (PI * (lb - z))
    }
}

pub fn reproducing_kernel(hb: &HBPolynomial, lambda: C64, z: C64) -> Result<C64> {
    Ok(DeBranges::new(hb)?.kernel(lambda, z))
}

pub fn inner_product(f: &ComplexPolynomial, g: &ComplexPolynomial, hb: &HBPolynomial) -> Result<C64> {
    DeBranges::new(hb)?.inner(f, g)
}

/// Θ₊/Θ₋ = Σ μ_j/(z − t_j) + a + bz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerglotzData {
    pub poles: Vec<f64>,
    pub residues: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

pub fn herglotz_decomposition(hb: &HBPolynomial) -> Result<HerglotzData> {
    let tm = &hb.theta_minus;
    let tp = &hb.theta_plus;
    if tm.is_zero() {
        return Err(Error::validation("Θ₋ vanishes identically"));
    }
    let poles = if tm.degree() == 0 {
        vec![]
    } else {
        let roots = poly_real_roots(tm, 1e-12)?;
        if let Some(r) = roots.iter().find(|r| r.multiplicity > 1) {
            return Err(Error::validation(format!("Θ₋ has a multiple zero at {}", r.value)));
        }
        if roots.len() != tm.degree() {
            return Err(Error::validation("Θ₋ has non-real zeros"));
        }
        roots.into_iter().map(|r| r.value).collect::<Vec<_>>()
    };
    let dtm = tm.derivative();
    let residues = poles.iter().map(|&t| tp.eval(t) / dtm.eval(t)).collect();
    let (q, _) = tp.div_rem(tm)?;
    if q.degree() > 1 {
        return Err(Error::validation("Θ₊/Θ₋ grows faster than linearly"));
    }
    Ok(HerglotzData { poles, residues, a: q.coeff(0), b: q.coeff(1) })
}

/// Second column (Φ₊, Φ₋) of the transfer matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondColumn {
    pub phi_plus: RealPolynomial,
    pub phi_minus: RealPolynomial,
    pub det_residual: f64,
}

fn test_points(count: usize) -> Vec<C64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let r = 0.1 * 100f64.powf(k as f64 / (count - 1) as f64);
            let phi = 0.05 + (PI - 0.1) * ((k as f64 * golden) / PI).fract();
            C64::from_polar(r, phi)
        })
        .collect()
}

/// Moments ⟨z^i, (Θ₊ − 1)/z⟩ for i < deg E.
fn moments(space: &DeBranges) -> Result<Vec<f64>> {
    let tp = &space.hb.theta_plus;
    let shifted = tp.sub(&RealPolynomial::constant(1.0));
    let (f, rem) = shifted.deflate(0.0);
    if rem.abs() > 1e-10 {
        return Err(Error::validation("E(0) must equal 1"));
    }
    let fc = f.to_complex();
    (0..space.degree())
        .map(|i| {
            let zi = RealPolynomial::constant(1.0).shift(i).to_complex();
            Ok(space.inner(&zi, &fc)?.re)
        })
        .collect()
}

fn g_poly(p: &RealPolynomial, m: &[f64]) -> RealPolynomial {
    let n = p.degree();
    let coeffs = (0..n.max(1)).map(|j| (j + 1..=n).map(|k| p.coeff(k) * m[k - 1 - j]).sum::<f64>() / PI).collect();
    RealPolynomial::from_raw(coeffs)
}

/// Φ₋ = 1 + λG₋, Φ₊ = λG₊ with G± = (1/π)⟨(Θ± − Θ±(λ))/(· − λ), (Θ₊ − 1)/t⟩.
pub fn reconstruct_second_column(hb: &HBPolynomial) -> Result<SecondColumn> {
    hb.require_normalized()?;
    let space = DeBranges::new(hb)?;
    let m = moments(&space)?;
    let phi_plus = g_poly(&hb.theta_plus, &m).shift(1);
    let phi_minus = g_poly(&hb.theta_minus, &m).shift(1).add(&RealPolynomial::constant(1.0));
    let det = hb.theta_plus.mul(&phi_minus).sub(&hb.theta_minus.mul(&phi_plus));
    let det_residual = det.dist(&RealPolynomial::constant(1.0));
    let scale = hb.theta_plus.max_abs().max(hb.theta_minus.max_abs()).max(1.0)
        * phi_plus.max_abs().max(phi_minus.max_abs()).max(1.0);
    if det_residual > 1e-9 * scale {
        return Err(Error::numerical(format!("det[Θ, Φ] − 1 residual {det_residual:.3e}")));
    }
    Ok(SecondColumn { phi_plus, phi_minus, det_residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestoreDiagnostics {
    pub det_residual: f64,
    /// Largest |Φ₊/Θ₊ − Σ_τ μ_τ[1/(τ−λ) − 1/τ]| relative to 1 + |Φ₊/Θ₊|.
    pub partial_fraction_residual: f64,
    pub min_im_phi_minus_ratio: f64,
    pub min_im_phi_plus_ratio: f64,
    /// tr J·(d/dλ)[Θ, Φ](0) = Φ̇₊(0) − Θ̇₋(0).
    pub trace_derivative: f64,
}

pub fn verify_second_column(hb: &HBPolynomial, col: &SecondColumn) -> Result<RestoreDiagnostics> {
    let tp = &hb.theta_plus;
    let tm = &hb.theta_minus;
    let zeros = if tp.degree() == 0 { vec![] } else { poly_real_roots(tp, 1e-12)? };
    if zeros.len() != tp.degree() || zeros.iter().any(|r| r.multiplicity > 1) {
        return Err(Error::numerical("zeros of Θ₊ are not real and simple"));
    }
    let dtp = tp.derivative();
    let mu: Vec<(f64, f64)> = zeros.iter().map(|r| (r.value, 1.0 / (dtp.eval(r.value) * tm.eval(r.value)))).collect();
    let mut pf = 0.0f64;
    let mut min_minus = f64::INFINITY;
    let mut min_plus = f64::INFINITY;
    for l in test_points(50) {
        let ratio = col.phi_plus.eval_c(l) / tp.eval_c(l);
        let sum: C64 = mu.iter().map(|&(t, m)| m * ((C64::new(t, 0.0) - l).inv() - 1.0 / t)).sum();
        pf = pf.max((ratio - sum).norm() / (1.0 + ratio.norm()));
        min_plus = min_plus.min(ratio.im);
        min_minus = min_minus.min((col.phi_minus.eval_c(l) / tm.eval_c(l)).im);
    }
    Ok(RestoreDiagnostics {
        det_residual: col.det_residual,
        partial_fraction_residual: pf,
        min_im_phi_minus_ratio: min_minus,
        min_im_phi_plus_ratio: min_plus,
        trace_derivative: col.phi_plus.coeff(1) - tm.coeff(1),
    })
}

/// L = (1/π)‖(Θ₊ − 1)/λ‖² − Θ̇₋(0).
pub fn system_length_from_e(hb: &HBPolynomial) -> Result<f64> {
    hb.require_normalized()?;
    let space = DeBranges::new(hb)?;
    let (f, _) = hb.theta_plus.sub(&RealPolynomial::constant(1.0)).deflate(0.0);
    Ok(space.norm_sqr(&f.to_complex())? / PI - hb.theta_minus.coeff(1))
}

/// Least-squares slope of y ↦ ln|E(iy)| over [y_max/10, y_max].
pub fn numeric_type<F: Fn(f64) -> f64>(ln_abs_e: F, y_max: f64) -> f64 {
    let n = 64;
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let y = y_max / 10.0 + (y_max - y_max / 10.0) * k as f64 / (n - 1) as f64;
            (y, ln_abs_e(y))
        })
        .collect();
    let my = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let num: f64 = pts.iter().map(|p| (p.0 - my) * (p.1 - mv)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - my).powi(2)).sum();
    num / den
}

/// ln|E(iy)| for a polynomial E, via its zeros.
pub fn polynomial_log_modulus(e: &ComplexPolynomial) -> Result<impl Fn(f64) -> f64> {
    let roots = poly_complex_roots(e)?;
    let e = e.clone();
    Ok(move |y: f64| e.ln_abs(C64::new(0.0, y), &roots))
}

/// ln|E(iy)| for the de Branges function E = Θ₊ + iΘ₋ of a system at its
/// right endpoint.
pub fn system_log_modulus(h: &Hamiltonian) -> impl Fn(f64) -> f64 + '_ {
    move |y: f64| {
        let (m, k) = monodromy_scaled(h, C64::new(0.0, y), h.total_length()).expect("finite system");
        (m.m11 + C64::new(0.0, 1.0) * m.m21).norm().ln() + k
    }
}

/// Degree test plus the pointwise bound |f(z)|² ≤ C‖f‖²K_z(z) on a grid.
pub fn membership_check(f: &ComplexPolynomial, hb: &HBPolynomial) -> Result<bool> {
    let space = DeBranges::new(hb)?;
    if f.degree() + 1 > space.degree() {
        return Ok(false);
    }
    let norm = space.norm_sqr(f)?;
    let e = hb.e();
    for z in test_points(40) {
        let diag = (e.eval(z).norm_sqr() - e.eval(z.conj()).norm_sqr()) / (4.0 * PI * z.im);
        if f.eval(z).norm_sqr() > (1.0 + 1e-8) * norm * diag + 1e-300 {
            return Ok(false);
        }
    }
    Ok(true)
}
