use crate::error::{Error, Result};
use crate::poly::{Coeff, Poly};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealRoot {
    pub value: f64,
    pub multiplicity: usize,
}

fn horner2(c: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

fn aberth(c: &[C64]) -> Vec<C64> {
    let n = c.len() - 1;
    let lead = c[n];
    let monic: Vec<C64> = c.iter().map(|&a| a / lead).collect();
    let cauchy = 1.0 + monic[..n].iter().fold(0.0f64, |m, a| m.max(a.norm()));
    let geo = monic[0].norm().powf(1.0 / n as f64);
    let radius = if geo.is_finite() && geo > 0.0 { geo.min(cauchy) } else { cauchy };
    let center = -monic[n - 1] / n as f64;
    let mut z: Vec<C64> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4;
            center + C64::from_polar(radius, th)
        })
        .collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner2(&monic, z[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let s: C64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d.norm() == 0.0 {
                        C64::new(0.0, 0.0)
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let w = ratio / (C64::new(1.0, 0.0) - ratio * s);
            if w.is_finite() {
                z[i] -= w;
                moved = moved.max(w.norm() / (1.0 + z[i].norm()));
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner2(&monic, *zi);
            if dp.norm() == 0.0 {
                break;
            }
            let cand = *zi - p / dp;
            if horner2(&monic, cand).0.norm() < p.norm() {
                *zi = cand;
            } else {
                break;
            }
        }
    }
    z
}

fn pair_conjugates(z: &mut [C64]) {
    let n = z.len();
    let mut used = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[b].im.abs().partial_cmp(&z[a].im.abs()).unwrap());
    for &i in &order {
        if used[i] {
            continue;
        }
        used[i] = true;
        let target = z[i].conj();
        let partner = (0..n)
            .filter(|&j| !used[j] && z[j].im * z[i].im <= 0.0)
            .min_by(|&a, &b| (z[a] - target).norm().partial_cmp(&(z[b] - target).norm()).unwrap());
        match partner {
            Some(j) if (z[j] - target).norm() < z[i].im.abs() => {
                used[j] = true;
                let m = (z[i] + z[j].conj()) / 2.0;
                z[i] = m;
                z[j] = m.conj();
            }
            _ => z[i].im = 0.0,
        }
    }
}

/// All complex roots, with conjugate pairs enforced for real input.
pub fn poly_complex_roots<T: Coeff>(p: &Poly<T>) -> Result<Vec<C64>> {
    let mut c: Vec<C64> = p.coeffs.iter().map(|a| a.to_c()).collect();
    while c.len() > 1 && c.last().unwrap().norm() == 0.0 {
        c.pop();
    }
    if c.len() < 2 {
        return Err(Error::validation("constant polynomial"));
    }
    let real_input = c.iter().all(|a| a.im == 0.0);
    let mut roots = Vec::new();
    let mut k = 0;
    while k < c.len() - 1 && c[k].norm() == 0.0 {
        roots.push(C64::new(0.0, 0.0));
        k += 1;
    }
    let rest = &c[k..];
    if rest.len() >= 2 {
        let mut z = aberth(rest);
        if real_input {
            pair_conjugates(&mut z);
        }
        roots.extend(z);
    }
    roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    Ok(roots)
}

fn newton_real(p: &Poly<f64>, mut x: f64) -> f64 {
    let dp = p.derivative();
    for _ in 0..50 {
        let v = p.eval(x);
        let d = dp.eval(x);
        if d == 0.0 || v == 0.0 {
            break;
        }
        let cand = x - v / d;
        if p.eval(cand).abs() >= v.abs() {
            break;
        }
        x = cand;
    }
    x
}

/// Real roots of `p`, sorted, with multiplicities. Roots whose imaginary
/// part is below √tol (relative) count as real; nearby real roots are merged.
pub fn poly_real_roots(p: &Poly<f64>, tol: f64) -> Result<Vec<RealRoot>> {
    let z = poly_complex_roots(p)?;
    let band = tol.max(1e-300).sqrt();
    let mut xs: Vec<f64> = z.iter().filter(|r| r.im.abs() <= band * (1.0 + r.norm())).map(|r| r.re).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<RealRoot> = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        let mut j = i + 1;
        while j < xs.len() && (xs[j] - xs[i]).abs() <= band * (1.0 + xs[i].abs()) {
            j += 1;
        }
        let m = j - i;
        let mean = xs[i..j].iter().sum::<f64>() / m as f64;
        let mut q = p.clone();
        for _ in 1..m {
            q = q.derivative();
        }
        out.push(RealRoot { value: newton_real(&q, mean), multiplicity: m });
        i = j;
    }
    Ok(out)
}

pub fn real_root_values(p: &Poly<f64>, tol: f64) -> Result<Vec<f64>> {
    Ok(poly_real_roots(p, tol)?.into_iter().map(|r| r.value).collect())
}
