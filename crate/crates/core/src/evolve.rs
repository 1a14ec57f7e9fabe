use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, Segment, SegmentKind};
use crate::linalg::{Complex2Vector, Matrix2, Sym2};
use crate::measure::{Atom, AtomicMeasure};
use crate::quad::gauss_on;
use log::warn;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Largest |z|·h·tr H per Magnus step.
const MAGNUS_STEP: f64 = 0.02;
const RESCALE_AT: f64 = 1e100;

/// I + λR for the rank-one Hamiltonian ⟨·, e⟩e on an interval of length a.
pub fn singular_interval_monodromy(a: f64, e: (f64, f64), lambda: C64) -> Matrix2 {
    let (ep, em) = e;
    let r = Matrix2::real(a * em * ep, a * em * em, -a * ep * ep, -a * em * ep);
    Matrix2::identity() + r.scale(lambda)
}

/// −zJH·h.
fn generator(h: &Sym2, z: C64, len: f64) -> Matrix2 {
    Matrix2::new(z * (h.b * len), z * (h.c * len), z * (-h.a * len), z * (-h.b * len))
}

fn magnus_cell(h0: &Sym2, h1: &Sym2, hc: f64, z: C64, u0: f64, u1: f64) -> (Matrix2, f64) {
    let len = u1 - u0;
    if len <= 0.0 {
        return (Matrix2::identity(), 0.0);
    }
    let tr = h0.trace().abs().max(h1.trace().abs());
    let steps = ((z.norm() * len * tr / MAGNUS_STEP).ceil() as usize).max(1);
    let h = len / steps as f64;
    let c = 3f64.sqrt() / 6.0;
    let at = |u: f64| h0.lerp(h1, u / hc);
    let mut m = Matrix2::identity();
    let mut log = 0.0;
    for k in 0..steps {
        let s = u0 + k as f64 * h;
        let a1 = generator(&at(s + (0.5 - c) * h), z, 1.0);
        let a2 = generator(&at(s + (0.5 + c) * h), z, 1.0);
        let comm = a2 * a1 - a1 * a2;
        let omega = (a1 + a2).scale(C64::new(0.5 * h, 0.0)) + comm.scale(C64::new(3f64.sqrt() * h * h / 12.0, 0.0));
        let (f, k) = omega.exp_traceless_scaled();
        m = f * m;
        log += k;
        let mx = m.max_abs();
        if mx > RESCALE_AT {
            m = m.scale(C64::new(1.0 / mx, 0.0));
            log += mx.ln();
        }
    }
    (m, log)
}

/// Transfer matrix across local positions [u0, u1] of a segment, as
/// (e^{-k}·N, k).
pub fn segment_factor_range(seg: &Segment, z: C64, u0: f64, u1: f64) -> (Matrix2, f64) {
    let len = u1 - u0;
    match &seg.kind {
        SegmentKind::RankOne { angle, weight } => {
            let (s, c) = angle.sin_cos();
            (singular_interval_monodromy(weight * len, (c, s), z), 0.0)
        }
        SegmentKind::Constant { matrix } => generator(matrix, z, len).exp_traceless_scaled(),
        SegmentKind::Sampled { matrices, .. } => {
            let cells = matrices.len() - 1;
            let hc = seg.length / cells as f64;
            let mut m = Matrix2::identity();
            let mut log = 0.0;
            let first = ((u0 / hc).floor() as usize).min(cells - 1);
            for k in first..cells {
                let lo = k as f64 * hc;
                if lo >= u1 {
                    break;
                }
                let a = u0.max(lo) - lo;
                let b = u1.min(lo + hc) - lo;
                let (f, kf) = magnus_cell(&matrices[k], &matrices[k + 1], hc, z, a, b);
                m = f * m;
                log += kf;
            }
            (m, log)
        }
    }
}

pub fn segment_factor(seg: &Segment, z: C64, t: f64) -> (Matrix2, f64) {
    segment_factor_range(seg, z, 0.0, t)
}

fn check_range(h: &Hamiltonian, x: f64) -> Result<()> {
    let l = h.total_length();
    if !(x >= 0.0) || x > l * (1.0 + 1e-12) + 1e-300 {
        return Err(Error::Range(format!("x = {x} outside [0, {l}]")));
    }
    Ok(())
}

/// M(x, z)·e^{-k} together with k.
pub fn monodromy_scaled(h: &Hamiltonian, z: C64, x: f64) -> Result<(Matrix2, f64)> {
    check_range(h, x)?;
    let mut m = Matrix2::identity();
    let mut log = 0.0;
    let mut start = 0.0;
    for seg in &h.segments {
        if start >= x {
            break;
        }
        let t = (x - start).min(seg.length);
        let (f, k) = segment_factor(seg, z, t);
        m = f * m;
        log += k;
        let mx = m.max_abs();
        if mx > RESCALE_AT || (mx < 1.0 / RESCALE_AT && mx > 0.0) {
            m = m.scale(C64::new(1.0 / mx, 0.0));
            log += mx.ln();
        }
        start += seg.length;
    }
    Ok((m, log))
}

/// Fundamental matrix M(x, z) of J Y′ = zHY with M(0, z) = I.
pub fn monodromy(h: &Hamiltonian, z: C64, x: f64) -> Result<Matrix2> {
    let (m, k) = monodromy_scaled(h, z, x)?;
    Ok(if k == 0.0 { m } else { m.scale(C64::new(k.exp(), 0.0)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionPair {
    pub theta: Complex2Vector,
    pub phi: Complex2Vector,
    pub x: f64,
    pub z: C64,
}

pub fn fundamental_columns(h: &Hamiltonian, z: C64, x: f64) -> Result<SolutionPair> {
    let m = monodromy(h, z, x)?;
    Ok(SolutionPair { theta: m.col1(), phi: m.col2(), x, z })
}

/// Calls `f(t, H(t), weight, M(t, z_k) for each k)` at Gauss nodes covering
/// (0, x).
fn integrate_along<F: FnMut(f64, &Sym2, f64, &[Matrix2])>(h: &Hamiltonian, x: f64, zs: &[C64], mut f: F) -> Result<()> {
    check_range(h, x)?;
    let zmax = zs.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut ms = vec![Matrix2::identity(); zs.len()];
    let mut start = 0.0;
    for seg in &h.segments {
        if start >= x {
            break;
        }
        let t_end = (x - start).min(seg.length);
        let mut cuts = vec![0.0];
        let (tr, cell) = match &seg.kind {
            SegmentKind::RankOne { weight, .. } => (*weight, t_end),
            SegmentKind::Constant { matrix } => (matrix.trace(), t_end),
            SegmentKind::Sampled { matrices, .. } => {
                (matrices.iter().fold(0.0f64, |m, s| m.max(s.trace())), seg.length / (matrices.len() - 1) as f64)
            }
        };
        // On a rank-one interval the integrands are polynomials of low degree
        // in t, which one Gauss panel integrates exactly.
        let panel = match seg.kind {
            SegmentKind::RankOne { .. } => t_end,
            _ => (0.5 / (zmax * tr).max(1e-300)).min(cell),
        };
        let mut u = 0.0;
        while u < t_end {
            let next_cell = ((u / cell).floor() + 1.0) * cell;
            let v = (u + panel).min(next_cell).min(t_end);
            let v = if v <= u { t_end } else { v };
            cuts.push(v);
            u = v;
        }
        for w in cuts.windows(2) {
            let (p0, p1) = (w[0], w[1]);
            for (t, wt) in gauss_on(p0, p1, 10) {
                let at: Vec<Matrix2> = zs
                    .iter()
                    .zip(ms.iter())
                    .map(|(&z, m)| {
                        let (fm, k) = segment_factor_range(seg, z, p0, t);
                        fm.scale(C64::new(k.exp(), 0.0)) * *m
                    })
                    .collect();
                f(start + t, &seg.value_at(t), wt, &at);
            }
            for (m, &z) in ms.iter_mut().zip(zs.iter()) {
                let (fm, k) = segment_factor_range(seg, z, p0, p1);
                *m = fm.scale(C64::new(k.exp(), 0.0)) * *m;
            }
        }
        start += seg.length;
    }
    Ok(())
}

/// ∫₀ˣ M*(t, λ) H(t) M(t, z) dt.
pub fn solution_gram(h: &Hamiltonian, lambda: C64, z: C64, x: f64) -> Result<Matrix2> {
    let mut acc = Matrix2::zero();
    integrate_along(h, x, &[lambda, z], |_, hs, w, ms| {
        let hm = Matrix2::from_sym(hs);
        acc = acc + (ms[0].adjoint() * hm * ms[1]).scale(C64::new(w, 0.0));
    })?;
    Ok(acc)
}

/// (z − λ̄) ∫₀ˣ M*(t, λ) H(t) M(t, z) dt, by quadrature.
pub fn greens_matrix(h: &Hamiltonian, lambda: C64, z: C64, x: f64) -> Result<Matrix2> {
    Ok(solution_gram(h, lambda, z, x)?.scale(z - lambda.conj()))
}

/// M*(x, λ) J M(x, z) − J.
pub fn greens_algebraic(h: &Hamiltonian, lambda: C64, z: C64, x: f64) -> Result<Matrix2> {
    let ml = monodromy(h, lambda, x)?;
    let mz = monodromy(h, z, x)?;
    Ok(ml.adjoint() * Matrix2::j() * mz - Matrix2::j())
}

/// ∫₀ˣ ⟨H Θ(t, z), Θ(t, z)⟩ dt.
pub fn theta_norm_sqr(h: &Hamiltonian, z: C64, x: f64) -> Result<f64> {
    let mut acc = 0.0;
    integrate_along(h, x, &[z], |_, hs, w, ms| acc += w * hs.quad(&ms[0].col1()))?;
    Ok(acc)
}

/// ∫₀ˣ H(s) ds.
pub fn accumulated_hamiltonian(h: &Hamiltonian, x: f64) -> Result<Sym2> {
    check_range(h, x)?;
    let mut acc = Sym2::new(0.0, 0.0, 0.0);
    let mut start = 0.0;
    for seg in &h.segments {
        if start >= x {
            break;
        }
        acc = acc.add(&seg.integral((x - start).min(seg.length)));
        start += seg.length;
    }
    Ok(acc)
}

fn boundary_value(h: &Hamiltonian, alpha: f64, lambda: f64) -> f64 {
    let m = monodromy(h, C64::new(lambda, 0.0), h.total_length()).expect("in range");
    m.m11.re * alpha.cos() + m.m21.re * alpha.sin()
}

fn check_boundary(h: &Hamiltonian, alpha: f64) -> Result<()> {
    if h.is_semi_infinite() {
        return Err(Error::validation("spectrum requires a finite interval"));
    }
    if let Some(Segment { kind: SegmentKind::RankOne { angle, .. }, .. }) = h.segments.last() {
        if (angle - alpha).sin().abs() <= 1e-12 {
            return Err(Error::validation(format!(
                "degenerate boundary condition: last indivisible interval has angle {angle} ≡ α"
            )));
        }
    }
    if let Some(Segment { kind: SegmentKind::RankOne { angle, .. }, .. }) = h.segments.first() {
        if angle.cos().abs() <= 1e-12 {
            warn!("condition (L) violated: first indivisible interval is vertical");
        }
    }
    Ok(())
}

/// Continuous polar angle of Θ(L, t) for real t, starting from 0 at x = 0.
/// Each step turns Θ by less than π: a rank-one interval moves it along a
/// straight line, and elsewhere |θ′| ≤ |t| tr H.
pub fn prufer_angle(h: &Hamiltonian, t: f64) -> f64 {
    let z = C64::new(t, 0.0);
    let (mut y0, mut y1) = (1.0f64, 0.0f64);
    let mut theta = 0.0;
    let mut advance = |f: Matrix2, y0: &mut f64, y1: &mut f64| {
        let n0 = f.m11.re * *y0 + f.m12.re * *y1;
        let n1 = f.m21.re * *y0 + f.m22.re * *y1;
        theta += (*y0 * n1 - *y1 * n0).atan2(*y0 * n0 + *y1 * n1);
        let r = n0.hypot(n1);
        *y0 = n0 / r;
        *y1 = n1 / r;
    };
    for seg in &h.segments {
        let len = seg.length;
        match &seg.kind {
            SegmentKind::RankOne { .. } => advance(segment_factor(seg, z, len).0, &mut y0, &mut y1),
            _ => {
                let tr = match &seg.kind {
                    SegmentKind::Constant { matrix } => matrix.trace(),
                    SegmentKind::Sampled { matrices, .. } => matrices.iter().fold(0.0f64, |m, s| m.max(s.trace())),
                    SegmentKind::RankOne { .. } => unreachable!(),
                };
                let steps = ((t.abs() * len * tr / 0.5).ceil() as usize).max(1);
                for k in 0..steps {
                    let u0 = len * k as f64 / steps as f64;
                    let u1 = len * (k + 1) as f64 / steps as f64;
                    advance(segment_factor_range(seg, z, u0, u1).0, &mut y0, &mut y1);
                }
            }
        }
    }
    theta
}

/// (θ(L, t) − α − π/2)/π, non-increasing in t; eigenvalues sit where it is
/// an integer.
fn eigen_index(h: &Hamiltonian, alpha: f64, t: f64) -> f64 {
    (prufer_angle(h, t) - alpha - std::f64::consts::FRAC_PI_2) / std::f64::consts::PI
}

fn bisect(h: &Hamiltonian, alpha: f64, mut a: f64, mut b: f64) -> f64 {
    if a == b {
        return a;
    }
    let f = |x: f64| boundary_value(h, alpha, x);
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || (b - a) <= 1e-15 * (1.0 + m.abs()) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

/// Total trace ∫ tr H, the length after normalization.
pub fn trace_length(h: &Hamiltonian) -> f64 {
    h.segments.iter().map(|s| s.integral(s.length).trace()).sum()
}

/// Eigenvalues of the selfadjoint realization with boundary condition
/// f₊(L) cos α + f₋(L) sin α = 0, inside [lo, hi].
pub fn spectrum_alpha(h: &Hamiltonian, alpha: f64, window: (f64, f64)) -> Result<Vec<f64>> {
    check_boundary(h, alpha)?;
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::validation("empty spectral window"));
    }
    let g_lo = eigen_index(h, alpha, lo);
    let g_hi = eigen_index(h, alpha, hi);
    let (k_min, k_max) = (g_hi.ceil() as i64, g_lo.floor() as i64);
    let mut roots = Vec::new();
    for k in (k_min..=k_max).rev() {
        let target = k as f64;
        // Narrow by the monotone index, then finish on the sign change of
        // the boundary form.
        let (mut a, mut b) = (lo, hi);
        let (mut ga, mut gb) = (g_lo, g_hi);
        for _ in 0..200 {
            let isolated = ga.floor() as i64 == k && gb.ceil() as i64 == k;
            if isolated && boundary_value(h, alpha, a) * boundary_value(h, alpha, b) <= 0.0 {
                break;
            }
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let gm = eigen_index(h, alpha, m);
            if gm > target {
                a = m;
                ga = gm;
            } else {
                b = m;
                gb = gm;
            }
        }
        roots.push(bisect(h, alpha, a, b));
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    Ok(roots)
}

/// Atoms at the α-spectrum with weights ‖Θ(·, λ)‖⁻².
pub fn spectral_measure_alpha(h: &Hamiltonian, alpha: f64, window: (f64, f64)) -> Result<AtomicMeasure> {
    let l = h.total_length();
    let atoms = spectrum_alpha(h, alpha, window)?
        .into_iter()
        .map(|t| Ok(Atom { t, w: 1.0 / theta_norm_sqr(h, C64::new(t, 0.0), l)? }))
        .collect::<Result<Vec<_>>>()?;
    AtomicMeasure::new(atoms)
}
