use super::{normalize_trace, Hamiltonian, Reparametrization, Segment};
use crate::error::{Error, Result};
use crate::linalg::Sym2;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

const DRIFT_TARGET: f64 = 1e-8;
const DRIFT_LIMIT: f64 = 1e-6;
const MAX_SUB: usize = 4096;

fn rk4<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]>(f: &F, x: f64, y: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| {
        let mut o = *a;
        for i in 0..N {
            o[i] += s * b[i];
        }
        o
    };
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = f(x + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = f(x + h, &add(y, &k3, h));
    let mut o = *y;
    for i in 0..N {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

struct Run<const N: usize> {
    xs: Vec<f64>,
    ys: Vec<[f64; N]>,
}

fn integrate<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]>(
    f: &F,
    y0: [f64; N],
    length: f64,
    steps: usize,
) -> Run<N> {
    let h = length / steps as f64;
    let mut xs = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps + 1);
    xs.push(0.0);
    ys.push(y0);
    for k in 0..steps {
        let y = rk4(f, k as f64 * h, &ys[k], h);
        xs.push((k + 1) as f64 * h);
        ys.push(y);
    }
    Run { xs, ys }
}

struct Refined<const N: usize> {
    run: Run<N>,
    sub: usize,
    drift: f64,
    richardson: f64,
}

/// Integrates with `cells · sub` RK4 steps, doubling `sub` until the
/// invariant drift is below target.
fn refine<const N: usize, F, D>(
    f: &F,
    y0: [f64; N],
    length: f64,
    cells: usize,
    drift: D,
    what: &str,
) -> Result<Refined<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    D: Fn(&[f64; N]) -> f64,
{
    let mut sub = 4;
    loop {
        let run = integrate(f, y0, length, cells * sub);
        let d = run.ys.iter().map(&drift).fold(0.0f64, f64::max);
        if d <= DRIFT_TARGET || sub >= MAX_SUB {
            if d > DRIFT_LIMIT {
                return Err(Error::numerical(format!("{what} drift {d:.3e} exceeds {DRIFT_LIMIT:e}; refine the grid")));
            }
            if d > DRIFT_TARGET {
                warn!("{what} drift {d:.3e} above target {DRIFT_TARGET:e}");
            }
            let half = integrate(f, y0, length, cells * sub / 2);
            let a = run.ys.last().unwrap();
            let b = half.ys.last().unwrap();
            let richardson = (0..N).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max) / 15.0;
            debug!("{what}: sub = {sub}, drift = {d:.3e}, richardson = {richardson:.3e}");
            return Ok(Refined { run, sub, drift: d, richardson });
        }
        sub *= 2;
    }
}

/// Samples of H/tr H on a uniform grid in ξ (the last state component).
fn resample<const N: usize, F, S>(
    f: &F,
    run: &Run<N>,
    to_sym: S,
    grid_n: usize,
) -> Result<(f64, Vec<Sym2>, Reparametrization)>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    S: Fn(&[f64; N]) -> Sym2,
{
    let xi: Vec<f64> = run.ys.iter().map(|y| y[N - 1]).collect();
    let total = *xi.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::validation("reduced Hamiltonian has zero trace"));
    }
    let mut out = Vec::with_capacity(grid_n);
    for j in 0..grid_n {
        let s = total * j as f64 / (grid_n - 1) as f64;
        let k = (xi.partition_point(|&v| v < s).max(1) - 1).min(xi.len() - 2);
        let (x0, y0) = (run.xs[k], run.ys[k]);
        let hmax = run.xs[k + 1] - x0;
        let mut tau = 0.0;
        let mut y = y0;
        for _ in 0..30 {
            y = if tau == 0.0 { y0 } else { rk4(f, x0, &y0, tau) };
            let g = y[N - 1] - s;
            let d = to_sym(&y).trace();
            if d <= 0.0 {
                break;
            }
            let step = g / d;
            tau = (tau - step).clamp(0.0, hmax);
            if step.abs() <= 1e-15 * (1.0 + x0.abs()) {
                break;
            }
        }
        if tau > 0.0 {
            y = rk4(f, x0, &y0, tau);
        }
        let m = to_sym(&y);
        let t = m.trace();
        if !(t > 0.0) {
            return Err(Error::numerical("zero trace at a resampling node"));
        }
        out.push(m.scale(1.0 / t));
    }
    let rep = Reparametrization { grid: run.xs.clone(), values: xi };
    Ok((total, out, rep))
}

fn lerp_samples(samples: &[f64], length: f64, x: f64) -> f64 {
    let n = samples.len();
    if n == 1 {
        return samples[0];
    }
    let u = (x / length).clamp(0.0, 1.0) * (n - 1) as f64;
    let k = (u.floor() as usize).min(n - 2);
    samples[k] + (samples[k + 1] - samples[k]) * (u - k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValue {
    pub value: f64,
    pub derivative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchrodingerContext {
    /// [[y₁², y₁y₂], [y₁y₂, y₂²]] on (0, 1) before normalization.
    pub raw: Hamiltonian,
    pub reparametrization: Reparametrization,
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub y1_end: BoundaryValue,
    pub y2_end: BoundaryValue,
    pub wronskian_drift: f64,
    pub richardson_error: f64,
}

/// Canonical system of −y″ + qy = λy on (0, 1); `q` is sampled uniformly
/// on [0, 1].
pub fn schrodinger_to_canonical(q: &[f64], h: f64, grid_n: usize) -> Result<(Hamiltonian, SchrodingerContext)> {
    if grid_n < 16 {
        return Err(Error::validation("grid_n must be at least 16"));
    }
    if q.is_empty() || q.iter().any(|v| !v.is_finite()) || !h.is_finite() {
        return Err(Error::validation("q samples and h must be finite"));
    }
    let f = |x: f64, y: &[f64; 5]| {
        let qx = lerp_samples(q, 1.0, x);
        [y[1], qx * y[0], y[3], qx * y[2], y[0] * y[0] + y[2] * y[2]]
    };
    let wr = |y: &[f64; 5]| (y[1] * y[2] - y[0] * y[3] + 1.0).abs();
    let cells = grid_n - 1;
    let r = refine(&f, [1.0, h, 0.0, 1.0, 0.0], 1.0, cells, wr, "Wronskian")?;
    let sym = |y: &[f64; 5]| Sym2::new(y[0] * y[0], y[0] * y[2], y[2] * y[2]);
    let (total, samples, rep) = resample(&f, &r.run, sym, grid_n)?;
    let nodes: Vec<[f64; 5]> = (0..grid_n).map(|j| r.run.ys[j * r.sub]).collect();
    let raw = Hamiltonian::new(vec![Segment::sampled(1.0, nodes.iter().map(sym).collect())])?;
    let end = r.run.ys.last().unwrap();
    let ctx = SchrodingerContext {
        raw,
        reparametrization: rep,
        x: (0..grid_n).map(|j| j as f64 / cells as f64).collect(),
        y1: nodes.iter().map(|y| y[0]).collect(),
        y2: nodes.iter().map(|y| y[2]).collect(),
        y1_end: BoundaryValue { value: end[0], derivative: end[1] },
        y2_end: BoundaryValue { value: end[2], derivative: end[3] },
        wronskian_drift: r.drift,
        richardson_error: r.richardson,
    };
    Ok((Hamiltonian::new(vec![Segment::sampled(total, samples)])?, ctx))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiracContext {
    pub reparametrization: Reparametrization,
    pub det_drift: f64,
    pub richardson_error: f64,
}

/// Canonical system of J X′ + Q X = 0 with Q sampled uniformly on
/// [0, length].
pub fn dirac_to_canonical(q: &[Sym2], length: f64, grid_n: usize) -> Result<(Hamiltonian, DiracContext)> {
    if grid_n < 2 || q.is_empty() || !(length > 0.0) || !length.is_finite() {
        return Err(Error::validation("Dirac reduction needs samples, grid_n ≥ 2 and a finite positive length"));
    }
    if q.iter().any(|m| !m.is_finite()) {
        return Err(Error::validation("Q samples must be finite"));
    }
    let at = |x: f64| {
        let n = q.len();
        if n == 1 {
            return q[0];
        }
        let u = (x / length).clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (u.floor() as usize).min(n - 2);
        q[k].lerp(&q[k + 1], u - k as f64)
    };
    // X′ = J Q X
    let f = |x: f64, y: &[f64; 5]| {
        let m = at(x);
        let (a11, a12, a21, a22) = (-m.b, -m.c, m.a, m.b);
        [
            a11 * y[0] + a12 * y[2],
            a11 * y[1] + a12 * y[3],
            a21 * y[0] + a22 * y[2],
            a21 * y[1] + a22 * y[3],
            y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3],
        ]
    };
    let det = |y: &[f64; 5]| (y[0] * y[3] - y[1] * y[2] - 1.0).abs();
    let r = refine(&f, [1.0, 0.0, 0.0, 1.0, 0.0], length, grid_n - 1, det, "determinant")?;
    let sym = |y: &[f64; 5]| Sym2::new(y[0] * y[0] + y[2] * y[2], y[0] * y[1] + y[2] * y[3], y[1] * y[1] + y[3] * y[3]);
    let (total, samples, rep) = resample(&f, &r.run, sym, grid_n)?;
    let ctx = DiracContext { reparametrization: rep, det_drift: r.drift, richardson_error: r.richardson };
    Ok((Hamiltonian::new(vec![Segment::sampled(total, samples)])?, ctx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StringDensity {
    /// (length, ρ) pieces.
    Pieces {
        pieces: Vec<(f64, f64)>,
    },
    Sampled {
        length: f64,
        samples: Vec<f64>,
    },
}

/// Hamiltonian diag(ρ, 1), trace-normalized. The produced system is in the
/// variable √λ of the string spectral parameter λ.
pub fn string_to_canonical(rho: &StringDensity) -> Result<Hamiltonian> {
    let positive = |r: f64| r > 0.0 && r.is_finite();
    let h = match rho {
        StringDensity::Pieces { pieces } => {
            if pieces.is_empty() || pieces.iter().any(|&(_, r)| !positive(r)) {
                return Err(Error::validation("string density must be positive"));
            }
            Hamiltonian::new(pieces.iter().map(|&(l, r)| Segment::constant(l, Sym2::diag(r, 1.0))).collect())?
        }
        StringDensity::Sampled { length, samples } => {
            if samples.len() < 2 || samples.iter().any(|&r| !positive(r)) {
                return Err(Error::validation("string density must be positive with at least 2 samples"));
            }
            Hamiltonian::new(vec![Segment::sampled(*length, samples.iter().map(|&r| Sym2::diag(r, 1.0)).collect())])?
        }
    };
    Ok(normalize_trace(&h)?.0)
}

/// Maps the right boundary parameter h_r (∞ allowed) to the parameter of
/// the canonical system; returns ∞ when Y₋(1) = 0.
pub fn boundary_parameter_map(y1: BoundaryValue, y2: BoundaryValue, h_r: f64) -> Result<f64> {
    let (num, den) = if h_r.is_infinite() {
        (-y2.value, y1.value)
    } else {
        (y2.derivative - h_r * y2.value, -y1.derivative + h_r * y1.value)
    };
    let scale = y1.value.abs().max(y1.derivative.abs()).max(y2.value.abs()).max(y2.derivative.abs()).max(1.0);
    if num.abs() <= 1e-14 * scale && den.abs() <= 1e-14 * scale {
        return Err(Error::validation("degenerate boundary data"));
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(num / den)
}
