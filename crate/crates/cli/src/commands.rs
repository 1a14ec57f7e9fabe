use crate::report::{Format, Session};
use crate::{DebrangesCmd, DirectCmd, Failure, InverseCmd, JacobiCmd, Opts, ReduceKind, WeylCmd};
use canon_core::debranges::{
    numeric_type, polynomial_log_modulus, reconstruct_second_column, reproducing_kernel, system_length_from_e,
    system_log_modulus, verify_second_column, HBPolynomial,
};
use canon_core::evolve::{accumulated_hamiltonian, monodromy, spectral_measure_alpha, spectrum_alpha};
use canon_core::hamiltonian::{
    dirac_to_canonical, exact_type, normalize_trace, schrodinger_to_canonical, string_to_canonical, Hamiltonian,
    Segment, StringDensity,
};
use canon_core::inverse::{
    regular_inverse, solve_finite_measure_inverse, solve_polynomial_inverse, theta_from_atoms, RegularHBSpec,
};
use canon_core::jacobi::{hamiltonian_to_jacobi, jacobi_to_hamiltonian, JacobiMatrix, RankOneChain};
use canon_core::measure::AtomicMeasure;
use canon_core::weyl::{inverse_singular, m_function, spectral_density, weyl_disk, MeasureDescriptor, Schedule};
use canon_core::{ComplexPolynomial, Sym2, C64};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

type Outcome = Result<(), Failure>;

fn need<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    path.as_deref().ok_or_else(|| Failure::Usage(format!("this subcommand needs {flag} FILE")))
}

fn tol(o: &Opts, default: f64) -> f64 {
    o.tol.unwrap_or(default)
}

fn threads(o: &Opts) -> usize {
    o.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Order-preserving map over `items` on up to `threads` scoped threads.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let chunk = items.len().div_ceil(threads.max(1)).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|c| scope.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

fn load_h(o: &Opts, s: &mut Session) -> Result<Hamiltonian, Failure> {
    s.read_json(need(&o.h, "--h")?)
}

fn load_e(o: &Opts, s: &mut Session) -> Result<HBPolynomial, Failure> {
    s.read_json(need(&o.e, "--e")?)
}

fn window(w: &[f64]) -> Result<(f64, f64), Failure> {
    if !(w[0] < w[1]) {
        return Err(Failure::Usage(format!("window needs LO < HI, got {} {}", w[0], w[1])));
    }
    Ok((w[0], w[1]))
}

fn max_trace_deviation(h: &Hamiltonian) -> f64 {
    let mut start = 0.0;
    let mut worst = 0.0f64;
    for seg in &h.segments {
        let len = if seg.length.is_finite() { seg.length } else { 1.0 };
        for k in 0..=8 {
            let x = start + len * k as f64 / 8.0;
            worst = worst.max((h.value_at(x).trace() - 1.0).abs());
        }
        start += seg.length;
    }
    worst
}

pub fn normalize(o: &Opts, s: &mut Session) -> Outcome {
    let h = load_h(o, s)?;
    let (normalized, rep) = normalize_trace(&h)?;
    s.residual("trace_deviation", max_trace_deviation(&normalized), tol(o, 1e-10));
    s.write_json("hamiltonian", &normalized)?;
    s.write_json("reparametrization", &rep)
}

#[derive(Deserialize)]
struct SchrodingerInput {
    q: Vec<f64>,
    h: f64,
    grid_n: usize,
}

#[derive(Deserialize)]
struct DiracInput {
    q: Vec<Sym2>,
    length: f64,
    grid_n: usize,
}

pub fn reduce(o: &Opts, s: &mut Session, kind: &ReduceKind) -> Outcome {
    let path = need(&o.input, "--input")?;
    let h = match kind {
        ReduceKind::Schrodinger => {
            let inp: SchrodingerInput = s.read_json(path)?;
            let (h, ctx) = schrodinger_to_canonical(&inp.q, inp.h, inp.grid_n)?;
            s.diagnostic("wronskian_drift", ctx.wronskian_drift);
            s.diagnostic("richardson_error", ctx.richardson_error);
            s.write_json("context", &ctx)?;
            h
        }
        ReduceKind::Dirac => {
            let inp: DiracInput = s.read_json(path)?;
            let (h, ctx) = dirac_to_canonical(&inp.q, inp.length, inp.grid_n)?;
            s.diagnostic("det_drift", ctx.det_drift);
            s.diagnostic("richardson_error", ctx.richardson_error);
            s.write_json("context", &ctx)?;
            h
        }
        ReduceKind::String => {
            let rho: StringDensity = s.read_json(path)?;
            string_to_canonical(&rho)?
        }
    };
    s.residual("trace_deviation", max_trace_deviation(&h), tol(o, 1e-10));
    s.write_json("hamiltonian", &h)
}

fn chain_distance(a: &RankOneChain, b: &RankOneChain) -> f64 {
    if a.links.len() != b.links.len() {
        return f64::INFINITY;
    }
    let cross = |x: [f64; 2], y: [f64; 2]| (x[0] * y[1] - x[1] * y[0]).abs();
    a.links
        .iter()
        .zip(&b.links)
        .map(|(x, y)| (x.length - y.length).abs().max(cross(x.e, y.e)))
        .fold(cross(a.right, b.right), f64::max)
}

fn jacobi_distance(a: &JacobiMatrix, b: &JacobiMatrix) -> f64 {
    if a.dim() != b.dim() {
        return f64::INFINITY;
    }
    a.q.iter().zip(&b.q).chain(a.rho.iter().zip(&b.rho)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn jacobi(o: &Opts, s: &mut Session, dir: &JacobiCmd) -> Outcome {
    match dir {
        JacobiCmd::To => {
            let chain = RankOneChain::from_hamiltonian(&load_h(o, s)?)?;
            let jm = hamiltonian_to_jacobi(&chain)?;
            let first = chain.links[0];
            let back = jacobi_to_hamiltonian(&jm, first.e, first.length)?;
            s.residual("roundtrip", chain_distance(&chain, &back), tol(o, 1e-8));
            s.write_json("jacobi", &jm)
        }
        JacobiCmd::From { seed_angle, delta1 } => {
            let jm: JacobiMatrix = s.read_json(need(&o.input, "--input")?)?;
            let chain = jacobi_to_hamiltonian(&jm, [seed_angle.cos(), seed_angle.sin()], *delta1)?;
            let back = hamiltonian_to_jacobi(&chain)?;
            s.residual("roundtrip", jacobi_distance(&jm, &back), tol(o, 1e-8));
            s.diagnostic("alpha", chain.alpha());
            if chain.right != [0.0, 1.0] {
                s.warn(format!(
                    "right boundary direction {:?}; use alpha = {} for the spectrum",
                    chain.right,
                    chain.alpha()
                ));
            }
            s.write_json("chain", &chain)?;
            s.write_json("hamiltonian", &chain.to_hamiltonian()?)
        }
    }
}

fn measure_rows(mu: &AtomicMeasure) -> Vec<Vec<f64>> {
    mu.atoms.iter().map(|a| vec![a.t, a.w]).collect()
}

fn write_measure(s: &mut Session, stem: &str, mu: &AtomicMeasure) -> Outcome {
    match s.format {
        Format::Json => s.write_json(stem, mu),
        Format::Csv => s.write_table(stem, &["t", "w"], &measure_rows(mu)),
    }
}

pub fn direct(o: &Opts, s: &mut Session, what: &DirectCmd) -> Outcome {
    let h = load_h(o, s)?;
    match what {
        DirectCmd::Monodromy { z, x } => {
            let x = x.unwrap_or(h.total_length());
            if !x.is_finite() {
                return Err(Failure::Usage("semi-infinite Hamiltonian: pass --x".into()));
            }
            let ms = par_map(z, threads(o), |&z| monodromy(&h, z, x));
            let ms = ms.into_iter().collect::<canon_core::Result<Vec<_>>>()?;
            let det = ms.iter().map(|m| (m.det() - 1.0).norm() / (1.0 + m.norm2().powi(2))).fold(0.0, f64::max);
            s.residual("det_deviation", det, tol(o, 1e-10));
            if h.trace_normalized {
                let excess = ms.iter().zip(z).map(|(m, z)| m.norm2().ln() - x * z.norm()).fold(f64::MIN, f64::max);
                s.residual("growth_excess", excess, tol(o, 1e-8));
            }
            let rows: Vec<Vec<f64>> = ms
                .iter()
                .zip(z)
                .map(|(m, z)| {
                    let mut r = vec![z.re, z.im];
                    for c in [m.m11, m.m12, m.m21, m.m22] {
                        r.extend([c.re, c.im]);
                    }
                    r
                })
                .collect();
            let header =
                ["z_re", "z_im", "m11_re", "m11_im", "m12_re", "m12_im", "m21_re", "m21_im", "m22_re", "m22_im"];
            s.write_table("monodromy", &header, &rows)
        }
        DirectCmd::Spectrum { alpha, window: w } => {
            let spec = spectrum_alpha(&h, *alpha, window(w)?)?;
            s.diagnostic("count", spec.len());
            s.write_table("spectrum", &["lambda"], &spec.iter().map(|&l| vec![l]).collect::<Vec<_>>())
        }
        DirectCmd::Measure { alpha, window: w } => {
            let mu = spectral_measure_alpha(&h, *alpha, window(w)?)?;
            s.diagnostic("count", mu.len());
            write_measure(s, "measure", &mu)
        }
    }
}

pub fn debranges(o: &Opts, s: &mut Session, what: &DebrangesCmd) -> Outcome {
    let hb = load_e(o, s)?;
    match what {
        DebrangesCmd::Kernel { lambda, z } => {
            let k = reproducing_kernel(&hb, *lambda, *z)?;
            let swapped = reproducing_kernel(&hb, *z, *lambda)?;
            s.residual("hermitian_symmetry", (k - swapped.conj()).norm() / (1.0 + k.norm()), tol(o, 1e-9));
            let diag = reproducing_kernel(&hb, *z, *z)?;
            s.at_least("diagonal", diag.re, -tol(o, 1e-12));
            s.write_json("kernel", &json!({ "lambda": lambda, "z": z, "value": k }))
        }
        DebrangesCmd::Phi => {
            let col = reconstruct_second_column(&hb)?;
            let d = verify_second_column(&hb, &col)?;
            s.residual("partial_fraction", d.partial_fraction_residual, tol(o, 1e-8));
            s.at_least("im_phi_minus_ratio", d.min_im_phi_minus_ratio, -tol(o, 1e-12));
            s.at_least("im_phi_plus_ratio", d.min_im_phi_plus_ratio, -tol(o, 1e-12));
            s.at_least("trace_derivative", d.trace_derivative, 0.0);
            s.diagnostic("det_residual", d.det_residual);
            s.write_json("phi", &json!({ "phi_plus": col.phi_plus, "phi_minus": col.phi_minus, "diagnostics": d }))
        }
        DebrangesCmd::Length => {
            let length = system_length_from_e(&hb)?;
            s.write_json("length", &json!({ "length": length }))
        }
        DebrangesCmd::Type { y_max } => {
            let p = numeric_type(polynomial_log_modulus(&hb.e())?, *y_max);
            s.write_json("type", &json!({ "type": p, "method": "numeric" }))
        }
    }
}

fn first_column_residual(h: &Hamiltonian, hb: &HBPolynomial) -> Result<f64, Failure> {
    let l = h.total_length();
    let mut worst = 0.0f64;
    for z in [C64::new(0.3, 0.0), C64::new(-1.0, 0.5), C64::new(0.7, -1.2), C64::new(2.0, 2.0)] {
        let m = monodromy(h, z, l)?;
        let (tp, tm) = (hb.theta_plus.eval_c(z), hb.theta_minus.eval_c(z));
        worst = worst.max(((m.m11 - tp).norm() + (m.m21 - tm).norm()) / (1.0 + tp.norm() + tm.norm()));
    }
    Ok(worst)
}

/// Largest position error and relative weight error of the direct measure
/// of `h` against `mu`.
fn measure_roundtrip(h: &Hamiltonian, mu: &AtomicMeasure) -> Result<(f64, f64), Failure> {
    let lo = mu.atoms.first().unwrap().t - 1.0;
    let hi = mu.atoms.last().unwrap().t + 1.0;
    let got = spectral_measure_alpha(h, FRAC_PI_2, (lo, hi))?;
    if got.len() != mu.len() {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    Ok(mu
        .atoms
        .iter()
        .zip(&got.atoms)
        .fold((0.0f64, 0.0f64), |(dt, dw), (a, b)| (dt.max((a.t - b.t).abs()), dw.max((a.w - b.w).abs() / a.w))))
}

pub fn inverse(o: &Opts, s: &mut Session, what: &InverseCmd) -> Outcome {
    match what {
        InverseCmd::Poly => {
            let hb = load_e(o, s)?;
            let h = solve_polynomial_inverse(&hb)?;
            s.residual("first_column", first_column_residual(&h, &hb)?, tol(o, 1e-7));
            s.diagnostic("segments", h.segments.len());
            s.diagnostic("degree", hb.degree());
            s.write_json("hamiltonian", &h)
        }
        InverseCmd::Measure { d1 } => {
            let mu: AtomicMeasure = s.read_json(need(&o.atoms, "--atoms")?)?;
            if mu.is_empty() {
                return Err(Failure::Invalid("measure has no atoms".into()));
            }
            let h = solve_finite_measure_inverse(&mu, *d1)?;
            let (dt, dw) = measure_roundtrip(&h, &mu)?;
            s.residual("roundtrip_positions", dt, tol(o, 1e-7));
            s.residual("roundtrip_weights", dw, tol(o, 1e-6));
            s.write_json("hamiltonian", &h)
        }
        InverseCmd::Regular { n, grid_n } => {
            let spec: RegularHBSpec = s.read_json(need(&o.spec, "--spec")?)?;
            let inv = regular_inverse(&spec, *n, *grid_n)?;
            s.diagnostic("length", inv.length);
            s.diagnostic("cauchy", &inv.cauchy);
            for w in &inv.warnings {
                s.warn(w.clone());
            }
            s.write_json("hamiltonian", &inv.hamiltonian)?;
            s.write_json("regular_inverse", &inv)
        }
    }
}

#[derive(Deserialize)]
struct SingularInput {
    measure: MeasureDescriptor,
    schedule: Schedule,
}

/// Points in ℂ₊ used to compare m-functions.
fn probe_points() -> Vec<C64> {
    [
        (0.0, 1.0),
        (1.0, 1.0),
        (-1.0, 1.0),
        (-2.0, 1.5),
        (0.5, 2.0),
        (3.0, 3.0),
        (0.0, 0.5),
        (2.0, 0.7),
        (-0.5, 3.0),
        (1.5, 2.5),
    ]
    .iter()
    .map(|&(re, im)| C64::new(re, im))
    .collect()
}

pub fn weyl(o: &Opts, s: &mut Session, what: &WeylCmd) -> Outcome {
    match what {
        WeylCmd::Disk { x, z } => {
            let d = weyl_disk(&load_h(o, s)?, *x, *z)?;
            s.diagnostic("m_x", [d.m_x.re, d.m_x.im]);
            s.write_table(
                "disk",
                &["x", "center_re", "center_im", "radius"],
                &[vec![d.x, d.center.re, d.center.im, d.radius]],
            )
        }
        WeylCmd::M { z } => {
            let h = load_h(o, s)?;
            let t = tol(o, 1e-8);
            let ms = par_map(z, threads(o), |&z| m_function(&h, z, t));
            let ms = ms.into_iter().collect::<canon_core::Result<Vec<_>>>()?;
            s.at_least("im_m", ms.iter().map(|m| m.m.im).fold(f64::INFINITY, f64::min), 0.0);
            let rows: Vec<Vec<f64>> = ms.iter().map(|m| vec![m.z.re, m.z.im, m.m.re, m.m.im]).collect();
            s.write_table("m", &["z_re", "z_im", "m_re", "m_im"], &rows)?;
            let trajectory: Vec<Vec<f64>> = ms
                .iter()
                .flat_map(|m| {
                    m.trajectory.iter().map(|d| vec![d.z.re, d.z.im, d.x, d.center.re, d.center.im, d.radius])
                })
                .collect();
            s.write_table("trajectory", &["z_re", "z_im", "x", "center_re", "center_im", "radius"], &trajectory)
        }
        WeylCmd::Density { window: w, points, eps } => {
            let h = load_h(o, s)?;
            let (lo, hi) = window(w)?;
            if *points < 2 {
                return Err(Failure::Usage("--points must be at least 2".into()));
            }
            let grid: Vec<f64> = (0..*points).map(|k| lo + (hi - lo) * k as f64 / (*points - 1) as f64).collect();
            let chunks: Vec<&[f64]> = grid.chunks(grid.len().div_ceil(threads(o))).collect();
            let parts = par_map(&chunks, threads(o), |c| spectral_density(&h, c, *eps));
            let density: Vec<f64> = parts.into_iter().collect::<canon_core::Result<Vec<_>>>()?.concat();
            let rows: Vec<Vec<f64>> = grid.iter().zip(&density).map(|(&t, &d)| vec![t, d]).collect();
            s.write_table("density", &["t", "density"], &rows)
        }
        WeylCmd::Inverse { measure, schedule } => {
            let inp: SingularInput = match (measure, schedule) {
                (Some(m), Some(sc)) => SingularInput { measure: s.read_json(m)?, schedule: s.read_json(sc)? },
                _ => s.read_json(need(&o.input, "--input or --measure with --schedule")?)?,
            };
            let inv = inverse_singular(&inp.measure, &inp.schedule)?;
            let mismatch = probe_points()
                .into_iter()
                .map(|z| Ok((m_function(&inv.system, z, 1e-8)?.m - inp.measure.herglotz(z)).norm()))
                .collect::<canon_core::Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            s.diagnostic("herglotz_mismatch", mismatch);
            s.diagnostic("cauchy", &inv.cauchy);
            s.diagnostic("tails", &inv.tails);
            s.diagnostic("lengths", &inv.lengths);
            s.write_json("hamiltonian", &inv.hamiltonian)?;
            s.write_json("singular_inverse", &inv)
        }
    }
}

#[derive(Serialize)]
struct TypeOutput {
    #[serde(rename = "type")]
    value: f64,
    method: &'static str,
}

pub fn exp_type(o: &Opts, s: &mut Session, numeric: bool, y_max: f64) -> Outcome {
    let out = match (&o.h, &o.e) {
        (Some(_), None) => {
            let h = load_h(o, s)?;
            if numeric {
                if !h.total_length().is_finite() {
                    return Err(Failure::Usage("numeric type needs a finite Hamiltonian".into()));
                }
                TypeOutput { value: numeric_type(system_log_modulus(&h), y_max), method: "numeric" }
            } else {
                TypeOutput { value: exact_type(&h), method: "exact" }
            }
        }
        (None, Some(_)) => {
            let hb = load_e(o, s)?;
            if numeric {
                TypeOutput { value: numeric_type(polynomial_log_modulus(&hb.e())?, y_max), method: "numeric" }
            } else {
                // polynomials have exponential type 0
                TypeOutput { value: 0.0, method: "exact" }
            }
        }
        _ => return Err(Failure::Usage("type needs exactly one of --h or --e".into())),
    };
    s.write_json("type", &out)
}

pub fn selftest(o: &Opts, s: &mut Session) -> Outcome {
    let free = Hamiltonian::free(PI);
    let det = [C64::new(0.0, 1.0), C64::new(3.0, 0.5), C64::new(-7.0, 2.0), C64::new(15.0, 0.0)]
        .iter()
        .map(|&z| Ok((monodromy(&free, z, PI)?.det() - 1.0).norm()))
        .collect::<canon_core::Result<Vec<f64>>>()?;
    s.residual("free_det", det.into_iter().fold(0.0, f64::max), tol(o, 1e-10));

    let spec = spectrum_alpha(&free, FRAC_PI_2, (-5.0, 5.0))?;
    let expected = [-4.0, -2.0, 0.0, 2.0, 4.0];
    let err = if spec.len() == expected.len() {
        spec.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    s.residual("free_spectrum", err, tol(o, 1e-8));

    let mixed = Hamiltonian::new(vec![
        Segment::constant(0.7, Sym2::new(0.6, 0.2, 0.4)),
        Segment::rank_one(0.5, 1.1),
        Segment::sampled(1.2, vec![Sym2::diag(0.3, 0.7), Sym2::new(0.5, -0.1, 0.5), Sym2::diag(0.9, 0.1)]),
    ])?;
    let mut trace = 0.0f64;
    for x in [0.3, 0.7, 1.0, 1.9, 2.4] {
        trace = trace.max((accumulated_hamiltonian(&mixed, x)?.trace() - x).abs());
    }
    s.residual("trace_identity", trace, tol(o, 1e-10));

    // E = (1 − iz)²: a horizontal piece of length 2, then a vertical one of length 1/2
    let e = ComplexPolynomial::new(vec![C64::new(1.0, 0.0), C64::new(0.0, -2.0), C64::new(-1.0, 0.0)]);
    let hb = HBPolynomial::from_e(&e)?;
    let h = solve_polynomial_inverse(&hb)?;
    let lengths: Vec<f64> = h.segments.iter().map(|g| g.length).collect();
    let seg_err = if lengths.len() == 2 {
        let vertical = (h.value_at(2.25).a).abs();
        (lengths[0] - 2.0).abs().max((lengths[1] - 0.5).abs()).max(vertical).max((h.value_at(1.0).c).abs())
    } else {
        f64::INFINITY
    };
    s.residual("worked_factorization", seg_err, tol(o, 1e-8));
    s.residual("length_from_e", (system_length_from_e(&hb)? - 2.5).abs(), tol(o, 1e-8));

    let mu = AtomicMeasure::from_pairs(&[(-1.5, 0.5), (0.0, 1.0), (2.0, 2.0)])?;
    let h = solve_finite_measure_inverse(&mu, 0.0)?;
    let (dt, dw) = measure_roundtrip(&h, &mu)?;
    s.residual("measure_positions", dt, tol(o, 1e-7));
    s.residual("measure_weights", dw, tol(o, 1e-6));

    let hb = theta_from_atoms(&mu, 0.0)?;
    let col = reconstruct_second_column(&hb)?;
    let d = verify_second_column(&hb, &col)?;
    s.residual("second_column_partial_fractions", d.partial_fraction_residual, tol(o, 1e-8));
    s.at_least("second_column_trace_derivative", d.trace_derivative, 0.0);

    let chain = RankOneChain::from_angles(&[(1.0, 0.0), (1.0, -PI / 4.0)])?;
    let jm = hamiltonian_to_jacobi(&chain)?;
    s.residual("jacobi_example", (jm.q[0] + 1.0).abs().max((jm.rho[0] - 2f64.sqrt()).abs()), tol(o, 1e-12));

    let m = m_function(&free.extend_to_infinity()?, C64::new(0.0, 1.0), 1e-8)?;
    s.residual("free_m", (m.m - C64::new(0.0, 1.0)).norm(), tol(o, 1e-6));

    let two = Hamiltonian::free(2.0);
    let numeric = numeric_type(system_log_modulus(&two), 200.0);
    s.residual("type_relative", (numeric - exact_type(&two)).abs() / exact_type(&two), tol(o, 0.02));
    Ok(())
}
