use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_on(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    x.iter().zip(w.iter()).map(|(&xi, &wi)| (m + h * xi, h * wi)).collect()
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let d = h * XGK[j];
        let s = f(c - d) + f(c + d);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss–Kronrod (7, 15) with absolute/relative tolerance.
pub fn integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> C64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = C64::new(0.0, 0.0);
    let (whole, _) = gk15(&f, a, b);
    let scale = whole.norm();
    let n_leaves = |d: usize| (1u64 << d.min(40)) as f64;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        let budget = (abs_tol.max(rel_tol * scale)) / n_leaves(depth).sqrt();
        if err <= budget || depth >= 40 || (hi - lo).abs() < 1e-14 * (1.0 + lo.abs()) {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

pub fn integrate_real<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate(|x| C64::new(f(x), 0.0), a, b, abs_tol, rel_tol).re
}

/// ∫ over the real line via t = s/(1 − s²).
pub fn integrate_line<F: Fn(f64) -> C64>(f: F, abs_tol: f64, rel_tol: f64) -> C64 {
    let g = |s: f64| {
        let d = 1.0 - s * s;
        if d <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        let t = s / d;
        let jac = (1.0 + s * s) / (d * d);
        let v = f(t) * jac;
        if v.is_finite() {
            v
        } else {
            C64::new(0.0, 0.0)
        }
    };
    integrate(g, -1.0, 0.0, abs_tol, rel_tol) + integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}
