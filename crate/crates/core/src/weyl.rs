use crate::error::{Error, Result};
use crate::evolve::{accumulated_hamiltonian, monodromy, monodromy_scaled, theta_norm_sqr};
use crate::hamiltonian::{Hamiltonian, Segment};
use crate::inverse::{difference_quotient, solve_measure_inverse_stieltjes};
use crate::linalg::{circumcircle, Matrix2, Sym2};
use crate::measure::{Atom, AtomicMeasure};
use crate::quad::{integrate, integrate_real};
use log::{debug, info};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

const DIAMETER_TOL: f64 = 1e-7;
const X_BUDGET: f64 = 1e15;
const POINT_DISK: f64 = 1e-10;

/// Image of ℂ₊ under the truncated Möbius map G_X = conj(M(X, z)⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylDisk {
    pub center: C64,
    pub radius: f64,
    pub x: f64,
    pub z: C64,
    /// Φ₋(X, z)/Θ₋(X, z).
    pub m_x: C64,
}

impl WeylDisk {
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// True when `other` lies inside this disk up to `tol`.
    pub fn contains_disk(&self, other: &WeylDisk, tol: f64) -> bool {
        (other.center - self.center).norm() + other.radius <= self.radius + tol
    }
}

/// w ↦ (a w + b)/(c w + d); `None` stands for ∞ on either side.
pub fn mobius(s: &Matrix2, w: Option<C64>) -> Option<C64> {
    let (num, den) = match w {
        Some(w) => (s.m11 * w + s.m12, s.m21 * w + s.m22),
        None => (s.m11, s.m21),
    };
    if den.norm() == 0.0 || !(num / den).is_finite() {
        None
    } else {
        Some(num / den)
    }
}

/// (S*JS − J)/i, Hermitian; S is J-contractive when it is positive
/// semidefinite.
pub fn j_form(s: &Matrix2) -> Matrix2 {
    let j = Matrix2::j();
    (s.adjoint() * j * *s - j).scale(C64::new(0.0, -1.0))
}

pub fn is_j_contractive(s: &Matrix2, tol: f64) -> bool {
    let q = j_form(s);
    let (a, c) = (q.m11.re, q.m22.re);
    let det = a * c - q.m12.norm_sqr();
    a >= -tol && c >= -tol && det >= -tol * (1.0 + a.abs() + c.abs())
}

fn check_upper(z: C64) -> Result<()> {
    if !(z.im > 0.0) || !z.is_finite() {
        return Err(Error::validation(format!("spectral point {z} must lie in the open upper half plane")));
    }
    Ok(())
}

fn disk_at(h: &Hamiltonian, x: f64, z: C64) -> Result<WeylDisk> {
    check_upper(z)?;
    let (m, _) = monodromy_scaled(h, z, x)?;
    let g = Matrix2::new(m.m22, -m.m12, -m.m21, m.m11).conj();
    let images: Vec<C64> = [None, Some(C64::new(0.0, 0.0)), Some(C64::new(1.0, 0.0)), Some(C64::new(-1.0, 0.0))]
        .into_iter()
        .filter_map(|w| mobius(&g, w))
        .take(3)
        .collect();
    let degenerate = || Error::numerical(format!("Weyl disk at X = {x} is a half plane: Θ₋(X, z) vanishes"));
    if images.len() < 3 {
        return Err(degenerate());
    }
    let spread = images.iter().map(|w| (w - images[0]).norm()).fold(0.0, f64::max);
    // Below roundoff the three images coincide and the disk is a point.
    let (center, radius) = if spread <= POINT_DISK * (1.0 + images[0].norm()) {
        (images[0], 0.5 * spread)
    } else {
        circumcircle(images[0], images[1], images[2]).ok_or_else(degenerate)?
    };
    Ok(WeylDisk { center, radius, x, z, m_x: m.m22 / m.m21 })
}

/// Weyl disk D_X, with its diameter checked against
/// 1/(Im z ∫₀ˣ Θ*HΘ) and the boundary point −conj(m_X).
pub fn weyl_disk(h: &Hamiltonian, x: f64, z: C64) -> Result<WeylDisk> {
    let disk = disk_at(h, x, z)?;
    let norm = theta_norm_sqr(h, z, x)?;
    if norm.is_finite() && norm > 0.0 {
        let expected = 1.0 / (z.im * norm);
        let mismatch = (disk.diameter() - expected).abs() / expected;
        debug!("disk at X = {x}: diameter {:.6e}, quadrature {:.6e}", disk.diameter(), expected);
        if mismatch > DIAMETER_TOL {
            return Err(Error::numerical(format!(
                "disk diameter {} disagrees with 1/(Im z ∫Θ*HΘ) = {expected} (relative {mismatch:.2e})",
                disk.diameter()
            )));
        }
    }
    let on_boundary = ((-disk.m_x.conj() - disk.center).norm() - disk.radius).abs();
    if on_boundary > 1e-8 * (1.0 + disk.center.norm() + disk.radius) {
        return Err(Error::numerical(format!("−conj(m_X) is {on_boundary:.2e} off the disk boundary")));
    }
    Ok(disk)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MFunction {
    pub m: C64,
    pub z: C64,
    /// Disks for X = 1, 2, 4, … until the diameter fell below the tolerance.
    pub trajectory: Vec<WeylDisk>,
}

/// m(z) = −conj(lim center of D_X), with |m − value| below `tol`.
pub fn m_function(h: &Hamiltonian, z: C64, tol: f64) -> Result<MFunction> {
    check_upper(z)?;
    if !h.is_semi_infinite() {
        return Err(Error::validation("m-function needs a Hamiltonian on the semiaxis"));
    }
    if !(tol > 0.0) {
        return Err(Error::validation("tolerance must be positive"));
    }
    if h.is_jacobi_degenerate(f64::INFINITY) {
        return Err(Error::validation("H ≡ diag(0, 1) on the semiaxis; no m-function exists"));
    }
    let mut trajectory = Vec::new();
    let mut x = 1.0;
    while x <= X_BUDGET {
        let disk = match disk_at(h, x, z) {
            Ok(d) => d,
            // Θ₋ can vanish identically on an initial vertical stretch
            Err(Error::Numerical(_)) if trajectory.is_empty() => {
                x *= 2.0;
                continue;
            }
            Err(e) => return Err(e),
        };
        trajectory.push(disk);
        if disk.diameter() < tol {
            info!("m({z}) converged at X = {x}");
            return Ok(MFunction { m: -disk.center.conj(), z, trajectory });
        }
        x *= 2.0;
    }
    Err(Error::numerical(format!(
        "limit-circle-like truncation: disk diameter still {:.3e} at X = {X_BUDGET:e}",
        trajectory.last().map_or(f64::INFINITY, |d| d.diameter())
    )))
}

const DENSITY_TOL: f64 = 1e-9;

/// Im m(t + iε)/π on the grid.
pub fn spectral_density(h: &Hamiltonian, grid: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::validation("ε must be positive"));
    }
    grid.iter().map(|&t| Ok(m_function(h, C64::new(t, eps), DENSITY_TOL)?.m.im / PI)).collect()
}

/// Positive measure μ on ℝ. Densities are with respect to Lebesgue measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureDescriptor {
    /// c·dt on the whole line.
    Constant {
        density: f64,
    },
    /// c(1 + |t|)^p dt on the whole line.
    PowerLaw {
        scale: f64,
        exponent: f64,
    },
    /// Piecewise-linear density through (t_k, ρ_k), zero outside.
    Sampled {
        t: Vec<f64>,
        density: Vec<f64>,
    },
    Atomic {
        atoms: Vec<Atom>,
    },
}

impl MeasureDescriptor {
    pub fn lebesgue() -> Self {
        MeasureDescriptor::Constant { density: 1.0 }
    }

    /// Checks ∫dμ/(1 + t²) < ∞ and positivity.
    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureDescriptor::Constant { density } => {
                if !(density.is_finite() && *density > 0.0) {
                    return Err(Error::validation("constant density must be positive"));
                }
            }
            MeasureDescriptor::PowerLaw { scale, exponent } => {
                if !(scale.is_finite() && *scale > 0.0 && exponent.is_finite()) {
                    return Err(Error::validation("power law needs positive scale and finite exponent"));
                }
                if *exponent >= 1.0 {
                    return Err(Error::validation(format!(
                        "∫dμ/(1 + t²) diverges for density growing like |t|^{exponent}"
                    )));
                }
            }
            MeasureDescriptor::Sampled { t, density } => {
                if t.len() < 2 || t.len() != density.len() {
                    return Err(Error::validation("sampled density needs matching t and density of length ≥ 2"));
                }
                if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation("sample points must be finite and increasing"));
                }
                if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) || density.iter().all(|d| *d == 0.0) {
                    return Err(Error::validation("sampled density must be nonnegative and not identically 0"));
                }
            }
            MeasureDescriptor::Atomic { atoms } => {
                AtomicMeasure::new(atoms.clone())?;
            }
        }
        Ok(())
    }

    fn density(&self, s: f64) -> f64 {
        match self {
            MeasureDescriptor::Constant { density } => *density,
            MeasureDescriptor::PowerLaw { scale, exponent } => scale * (1.0 + s.abs()).powf(*exponent),
            MeasureDescriptor::Sampled { t, density } => {
                if s < t[0] || s > *t.last().unwrap() {
                    return 0.0;
                }
                let k = t.partition_point(|&x| x <= s).clamp(1, t.len() - 1);
                let u = (s - t[k - 1]) / (t[k] - t[k - 1]);
                density[k - 1] + u * (density[k] - density[k - 1])
            }
            MeasureDescriptor::Atomic { .. } => 0.0,
        }
    }

    /// Continuous part restricted to a finite interval, split at the
    /// sample points so each piece is smooth.
    fn integrate_continuous<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let mut cuts = vec![a];
        match self {
            MeasureDescriptor::Sampled { t, .. } => cuts.extend(t.iter().copied().filter(|&x| x > a && x < b)),
            MeasureDescriptor::PowerLaw { .. } if a < 0.0 && b > 0.0 => cuts.push(0.0),
            _ => {}
        }
        cuts.push(b);
        cuts.windows(2).map(|w| integrate_real(|s| f(s) * self.density(s), w[0], w[1], 1e-14, 1e-12)).sum()
    }

    /// μ([a, b]) and ∫_{[a,b]} t dμ.
    pub fn mass_and_moment(&self, a: f64, b: f64) -> (f64, f64) {
        match self {
            MeasureDescriptor::Atomic { atoms } => {
                atoms.iter().filter(|x| x.t >= a && x.t <= b).fold((0.0, 0.0), |(m, mt), x| (m + x.w, mt + x.w * x.t))
            }
            _ => (self.integrate_continuous(|_| 1.0, a, b), self.integrate_continuous(|s| s, a, b)),
        }
    }

    /// ∫_{|t| > s} dμ/(1 + t²).
    pub fn tail(&self, s: f64) -> f64 {
        let weight = |t: f64| 1.0 / (1.0 + t * t);
        match self {
            MeasureDescriptor::Atomic { atoms } => {
                atoms.iter().filter(|x| x.t.abs() > s).map(|x| x.w * weight(x.t)).sum()
            }
            MeasureDescriptor::Sampled { t, .. } => {
                let (lo, hi) = (t[0], *t.last().unwrap());
                let left = if lo < -s { self.integrate_continuous(weight, lo, -s) } else { 0.0 };
                let right = if hi > s { self.integrate_continuous(weight, s, hi) } else { 0.0 };
                left + right
            }
            MeasureDescriptor::Constant { density } => 2.0 * density * (FRAC_PI_2 - s.atan()),
            MeasureDescriptor::PowerLaw { .. } => {
                // t = e^u on each side
                let side = integrate_real(
                    |u| self.density(u.exp()) * weight(u.exp()) * u.exp(),
                    s.max(1e-300).ln(),
                    700.0,
                    1e-14,
                    1e-10,
                );
                2.0 * side
            }
        }
    }

    /// (1/π)∫(1/(t − z) − t/(1 + t²)) dμ(t).
    pub fn herglotz(&self, z: C64) -> C64 {
        let kernel = |t: f64| 1.0 / (t - z) - t / (1.0 + t * t);
        let total = match self {
            MeasureDescriptor::Constant { density } => C64::new(0.0, PI * density),
            MeasureDescriptor::Atomic { atoms } => atoms.iter().map(|a| kernel(a.t) * a.w).sum(),
            MeasureDescriptor::Sampled { t, .. } => {
                let mut cuts = t.clone();
                cuts.dedup();
                cuts.windows(2).map(|w| integrate(|s| kernel(s) * self.density(s), w[0], w[1], 1e-14, 1e-12)).sum()
            }
            MeasureDescriptor::PowerLaw { .. } => {
                let r = 1.0 + 4.0 * z.norm();
                let core = integrate(|s| kernel(s) * self.density(s), -r, 0.0, 1e-14, 1e-12)
                    + integrate(|s| kernel(s) * self.density(s), 0.0, r, 1e-14, 1e-12);
                let tails = integrate(
                    |u| {
                        let t = u.exp();
                        (kernel(t) + kernel(-t)) * self.density(t) * t
                    },
                    r.ln(),
                    700.0,
                    1e-14,
                    1e-10,
                );
                core + tails
            }
        };
        total / PI
    }

    /// ∫_{±t > s} dμ/t² on the side given by `sign`.
    pub fn one_sided_tail(&self, s: f64, sign: f64) -> f64 {
        let weight = |t: f64| 1.0 / (t * t);
        match self {
            MeasureDescriptor::Atomic { atoms } => {
                atoms.iter().filter(|a| sign * a.t > s).map(|a| a.w * weight(a.t)).sum()
            }
            MeasureDescriptor::Constant { density } => density / s,
            MeasureDescriptor::Sampled { t, .. } => {
                let (lo, hi) = if sign > 0.0 { (s, *t.last().unwrap()) } else { (t[0], -s) };
                if hi > lo {
                    self.integrate_continuous(weight, lo, hi)
                } else {
                    0.0
                }
            }
            MeasureDescriptor::PowerLaw { .. } => integrate_real(
                |u| {
                    let t = u.exp();
                    self.density(t) * weight(t) * t
                },
                s.ln(),
                700.0,
                1e-14,
                1e-10,
            ),
        }
    }

    /// μ on [−s, s] split into at most n cells of equal mass, each replaced
    /// by an atom at its barycenter.
    pub fn atomize(&self, s: f64, n: usize) -> Result<Vec<Atom>> {
        if n == 0 || !(s > 0.0) {
            return Err(Error::validation("atomization needs n ≥ 1 and a positive window"));
        }
        if let MeasureDescriptor::Atomic { atoms } = self {
            let inside: Vec<Atom> = atoms.iter().copied().filter(|a| a.t.abs() <= s).collect();
            if inside.len() <= n {
                return Ok(inside);
            }
            let total: f64 = inside.iter().map(|a| a.w).sum();
            let mut groups: Vec<Vec<Atom>> = vec![Vec::new(); n];
            let mut acc = 0.0;
            for a in inside {
                let k = (((acc + 0.5 * a.w) / total * n as f64) as usize).min(n - 1);
                groups[k].push(a);
                acc += a.w;
            }
            return Ok(groups
                .into_iter()
                .filter(|g| !g.is_empty())
                .map(|g| {
                    let w: f64 = g.iter().map(|a| a.w).sum();
                    Atom { t: g.iter().map(|a| a.w * a.t).sum::<f64>() / w, w }
                })
                .collect());
        }
        let (total, _) = self.mass_and_moment(-s, s);
        if !(total > 0.0) {
            return Err(Error::validation(format!("μ has no mass in [−{s}, {s}]")));
        }
        let mut cuts = vec![-s];
        for k in 1..n {
            let target = total * k as f64 / n as f64;
            let (mut lo, mut hi) = (*cuts.last().unwrap(), s);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if self.mass_and_moment(-s, mid).0 < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            cuts.push(0.5 * (lo + hi));
        }
        cuts.push(s);
        Ok(cuts
            .windows(2)
            .filter_map(|w| {
                let (m, mt) = self.mass_and_moment(w[0], w[1]);
                (m > 0.0).then(|| Atom { t: mt / m, w: m })
            })
            .collect())
    }
}

/// Approximation schedule: for each N, the window [−s_N, s_N].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub n_list: Vec<usize>,
    /// s_N for each N; defaults to s_N = N.
    #[serde(default)]
    pub windows: Vec<f64>,
    pub x_max: f64,
    pub grid_n: usize,
}

impl Schedule {
    pub fn windows(&self) -> Vec<f64> {
        if self.windows.is_empty() {
            self.n_list.iter().map(|&n| n as f64).collect()
        } else {
            self.windows.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::validation("schedule needs a nonempty list of positive N"));
        }
        if !self.windows.is_empty() && self.windows.len() != self.n_list.len() {
            return Err(Error::validation("one window per N"));
        }
        if self.windows().iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::validation("windows must be positive"));
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) || self.grid_n < 2 {
            return Err(Error::validation("need x_max > 0 and grid_n ≥ 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularInverse {
    /// Difference quotients of the final G_N on the grid over [0, x_max].
    pub hamiltonian: Hamiltonian,
    /// Final approximating system on the semiaxis (diag(0, 1) beyond its
    /// finite part), whose m-function is m_N.
    pub system: Hamiltonian,
    pub grid: Vec<f64>,
    pub g: Vec<Sym2>,
    /// The atomic measures μ_N, with weights μ_N/π.
    pub measures: Vec<AtomicMeasure>,
    pub lengths: Vec<f64>,
    /// ∫_{|t| > s_N} dμ/(1 + t²) for each N.
    pub tails: Vec<f64>,
    /// sup over the grid of ‖G_N − G_N′‖ for consecutive N.
    pub cauchy: Vec<f64>,
}

/// Distance of the tail atoms, in units of the window.
const TAIL_REACH: f64 = 4.0;

/// One atom at ±T per side with mass T²∫_{±t > s} dμ/t², so that the
/// tail keeps its contribution z·∫dμ/t² to the Herglotz transform.
fn tail_atoms(mu: &MeasureDescriptor, s: f64) -> Vec<Atom> {
    let t = TAIL_REACH * s;
    [-1.0, 1.0]
        .into_iter()
        .filter_map(|sign| {
            let w = t * t * mu.one_sided_tail(s, sign);
            (w > 0.0).then_some(Atom { t: sign * t, w })
        })
        .collect()
}

fn approximant(mu: &MeasureDescriptor, n: usize, s: f64) -> Result<(AtomicMeasure, Hamiltonian)> {
    let tails = if n > 2 { tail_atoms(mu, s) } else { Vec::new() };
    let mut atoms = mu.atomize(s, n - tails.len())?;
    atoms.extend(tails);
    let zero_mass = 1.0 / n as f64;
    match atoms.iter_mut().find(|a| a.t.abs() <= 1e-12 * s) {
        Some(a) => {
            a.t = 0.0;
            a.w += zero_mass;
        }
        None => atoms.push(Atom { t: 0.0, w: zero_mass }),
    }
    // The finite inverse works with weights ‖Θ(·, t)‖⁻², which are μ/π.
    let measure = AtomicMeasure::new(atoms.into_iter().map(|a| Atom { t: a.t, w: a.w / PI }).collect())?;
    let h = solve_measure_inverse_stieltjes(&measure, 0.0).map_err(|e| Error::numerical(format!("N = {n}: {e}")))?;
    Ok((measure, h))
}

fn semiaxis(h: &Hamiltonian) -> Result<Hamiltonian> {
    let mut segs = h.segments.clone();
    segs.push(Segment::rank_one(f64::INFINITY, FRAC_PI_2));
    Hamiltonian::new(segs)
}

/// Canonical system on [0, x_max] whose spectral measure approximates μ,
/// built from finite atomic approximations μ_N.
pub fn inverse_singular(mu: &MeasureDescriptor, schedule: &Schedule) -> Result<SingularInverse> {
    mu.validate()?;
    schedule.validate()?;
    let windows = schedule.windows();
    let results: Vec<Result<(AtomicMeasure, Hamiltonian)>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            schedule.n_list.iter().zip(&windows).map(|(&n, &s)| scope.spawn(move || approximant(mu, n, s))).collect();
        handles.into_iter().map(|h| h.join().expect("approximation thread panicked")).collect()
    });
    let grid: Vec<f64> =
        (0..schedule.grid_n).map(|k| schedule.x_max * k as f64 / (schedule.grid_n - 1) as f64).collect();
    let mut measures = Vec::new();
    let mut lengths = Vec::new();
    let mut systems = Vec::new();
    let mut gs: Vec<Vec<Sym2>> = Vec::new();
    for r in results {
        let (measure, h) = r?;
        let full = semiaxis(&h)?;
        let g = grid.iter().map(|&x| accumulated_hamiltonian(&full, x)).collect::<Result<Vec<_>>>()?;
        lengths.push(h.total_length());
        measures.push(measure);
        systems.push(full);
        gs.push(g);
    }
    let tails = windows.iter().map(|&s| mu.tail(s)).collect();
    let cauchy = gs.windows(2).map(|w| w[0].iter().zip(&w[1]).fold(0.0f64, |m, (a, b)| m.max(a.dist(b)))).collect();
    let g = gs.pop().unwrap();
    let hamiltonian = difference_quotient(&grid, &g)?;
    Ok(SingularInverse { hamiltonian, system: systems.pop().unwrap(), grid, g, measures, lengths, tails, cauchy })
}

/// m_N(z) = Φ₋(L_N, z)/Θ₋(L_N, z) of the finite part of an approximant.
pub fn finite_m(h: &Hamiltonian, z: C64) -> Result<C64> {
    let m = monodromy(h, z, h.total_length())?;
    Ok(m.m22 / m.m21)
}
