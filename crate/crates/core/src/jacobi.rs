use crate::error::{Error, Result};
use crate::hamiltonian::{Hamiltonian, Segment, SegmentKind};
use crate::measure::AtomicMeasure;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

const UNIT_TOL: f64 = 1e-12;

/// Tridiagonal matrix with diagonal `q` and off-diagonal `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawJacobi")]
pub struct JacobiMatrix {
    pub q: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Deserialize)]
struct RawJacobi {
    q: Vec<f64>,
    rho: Vec<f64>,
}

impl TryFrom<RawJacobi> for JacobiMatrix {
    type Error = Error;
    fn try_from(r: RawJacobi) -> Result<Self> {
        JacobiMatrix::new(r.q, r.rho)
    }
}

impl JacobiMatrix {
    pub fn new(q: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if q.is_empty() || rho.len() + 1 != q.len() {
            return Err(Error::validation(format!(
                "finite section needs len(rho) = len(q) - 1, got {} and {}",
                rho.len(),
                q.len()
            )));
        }
        if q.iter().chain(&rho).any(|x| !x.is_finite()) {
            return Err(Error::validation("Jacobi entries must be finite"));
        }
        if rho.contains(&0.0) {
            return Err(Error::validation("off-diagonal entries must be nonzero"));
        }
        Ok(Self { q, rho })
    }

    /// Section of depth n of a semi-infinite matrix given entrywise.
    pub fn section(depth: usize, q: impl Fn(usize) -> f64, rho: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((1..=depth).map(q).collect(), (1..depth).map(rho).collect())
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.q[i];
        }
        for (i, &r) in self.rho.iter().enumerate() {
            m[(i, i + 1)] = r;
            m[(i + 1, i)] = r;
        }
        m
    }

    /// Sorted eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.to_dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub length: f64,
    pub e: [f64; 2],
}

/// Piecewise rank-one Hamiltonian ⟨·, e_j⟩e_j on consecutive intervals of
/// length l_j. `right` is the direction e with boundary condition
/// ⟨f(L), e⟩ = 0 closing a finite section; (0, 1) mirrors the left end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChain")]
pub struct RankOneChain {
    pub links: Vec<ChainLink>,
    pub right: [f64; 2],
}

#[derive(Deserialize)]
struct RawChain {
    links: Vec<ChainLink>,
    #[serde(default = "vertical")]
    right: [f64; 2],
}

fn vertical() -> [f64; 2] {
    [0.0, 1.0]
}

impl TryFrom<RawChain> for RankOneChain {
    type Error = Error;
    fn try_from(r: RawChain) -> Result<Self> {
        RankOneChain::with_boundary(r.links, r.right)
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// J e for J = (0 −1; 1 0).
fn perp(e: [f64; 2]) -> [f64; 2] {
    [-e[1], e[0]]
}

fn is_unit(e: [f64; 2]) -> bool {
    ((e[0] * e[0] + e[1] * e[1]).sqrt() - 1.0).abs() <= UNIT_TOL
}

/// ⟨e, f⟩ / ⟨e⊥, f⟩, the cotangent of the angle from e to f.
fn cot(e: [f64; 2], f: [f64; 2]) -> Result<f64> {
    let s = dot(perp(e), f);
    if s == 0.0 {
        return Err(Error::validation("consecutive directions are parallel"));
    }
    Ok(dot(e, f) / s)
}

impl RankOneChain {
    pub fn new(links: Vec<ChainLink>) -> Result<Self> {
        Self::with_boundary(links, vertical())
    }

    pub fn with_boundary(links: Vec<ChainLink>, right: [f64; 2]) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::validation("chain has no links"));
        }
        for l in &links {
            if !(l.length > 0.0 && l.length.is_finite()) {
                return Err(Error::validation(format!("invalid link length {}", l.length)));
            }
            if !is_unit(l.e) {
                return Err(Error::validation(format!("direction {:?} is not a unit vector", l.e)));
            }
        }
        if !is_unit(right) {
            return Err(Error::validation("boundary direction is not a unit vector"));
        }
        if links.windows(2).any(|w| dot(perp(w[0].e), w[1].e) == 0.0) {
            return Err(Error::validation("consecutive directions are parallel"));
        }
        if links[0].e[0] == 0.0 {
            return Err(Error::validation("(L) violated: first direction is (0, ±1)"));
        }
        Ok(Self { links, right })
    }

    /// From (length, angle) pairs with e = (cos θ, sin θ).
    pub fn from_angles(pieces: &[(f64, f64)]) -> Result<Self> {
        Self::new(pieces.iter().map(|&(length, a)| ChainLink { length, e: [a.cos(), a.sin()] }).collect())
    }

    pub fn to_hamiltonian(&self) -> Result<Hamiltonian> {
        Hamiltonian::new(self.links.iter().map(|l| Segment::rank_one(l.length, l.e[1].atan2(l.e[0]))).collect())
    }

    /// Reads a finite all-rank-one Hamiltonian with unit weights.
    pub fn from_hamiltonian(h: &Hamiltonian) -> Result<Self> {
        let links = h
            .segments
            .iter()
            .map(|s| match s.kind {
                SegmentKind::RankOne { angle, weight } if (weight - 1.0).abs() <= UNIT_TOL => {
                    Ok(ChainLink { length: s.length, e: [angle.cos(), angle.sin()] })
                }
                _ => Err(Error::validation("chain needs unit-weight rank-one segments only")),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(links)
    }

    /// Boundary angle α of the right end, for `spectrum_alpha`.
    pub fn alpha(&self) -> f64 {
        self.right[1].atan2(self.right[0])
    }
}

/// Jacobi section of a chain, with e₀ = (0, 1) on the left and the chain's
/// boundary direction on the right.
pub fn hamiltonian_to_jacobi(chain: &RankOneChain) -> Result<JacobiMatrix> {
    let links = &chain.links;
    let n = links.len();
    if links[0].e[0] == 0.0 {
        return Err(Error::validation("(L) violated: first direction is (0, ±1)"));
    }
    let dir = |j: usize| -> [f64; 2] {
        if j == 0 {
            vertical()
        } else if j > n {
            chain.right
        } else {
            links[j - 1].e
        }
    };
    let mut q = Vec::with_capacity(n);
    let mut rho = Vec::with_capacity(n - 1);
    for j in 1..=n {
        let e = dir(j);
        let left = if j == 1 { e[1] / e[0] } else { cot(e, dir(j - 1))? };
        let next = dir(j + 1);
        let right = cot(e, next)?;
        q.push((right - left) / links[j - 1].length);
        if j < n {
            rho.push(-1.0 / (dot(perp(e), next) * (links[j].length * links[j - 1].length).sqrt()));
        }
    }
    JacobiMatrix::new(q, rho)
}

/// The unique chain with e₁ = `e1`, l₁ = `delta1` whose Jacobi section is
/// `jm`; the last diagonal entry fixes the right boundary direction.
pub fn jacobi_to_hamiltonian(jm: &JacobiMatrix, e1: [f64; 2], delta1: f64) -> Result<RankOneChain> {
    if jm.rho.iter().any(|&r| r <= 0.0) {
        return Err(Error::validation("off-diagonal entries must be positive"));
    }
    if !is_unit(e1) {
        return Err(Error::validation("seed direction is not a unit vector"));
    }
    if e1[0].abs() <= UNIT_TOL {
        return Err(Error::validation("(L) violated: seed direction is (0, 1)"));
    }
    if !(delta1 > 0.0 && delta1.is_finite()) {
        return Err(Error::validation("seed length must be positive"));
    }
    let n = jm.dim();
    let mut links = vec![ChainLink { length: delta1, e: e1 }];
    let mut left = e1[1] / e1[0];
    let mut right = vertical();
    for j in 0..n {
        let ChainLink { length, e } = links[j];
        let c = jm.q[j] * length + left;
        // Branch with ⟨e⊥, next⟩ < 0, so that ρ > 0.
        let s = -1.0 / (1.0 + c * c).sqrt();
        let (ep, cs) = (perp(e), c * s);
        let next = [cs * e[0] + s * ep[0], cs * e[1] + s * ep[1]];
        if j + 1 == n {
            right = next;
            break;
        }
        let r = jm.rho[j];
        let l_next = 1.0 / (r * r * s * s * length);
        links.push(ChainLink { length: l_next, e: next });
        left = cot(next, e)?;
    }
    RankOneChain::with_boundary(links, right)
}

/// Jacobi matrix whose spectral measure at the first basis vector is
/// μ/μ(ℝ), by Lanczos with full reorthogonalization; also returns μ(ℝ).
pub fn measure_to_jacobi(mu: &AtomicMeasure) -> Result<(JacobiMatrix, f64)> {
    let n = mu.len();
    if n == 0 {
        return Err(Error::validation("empty measure"));
    }
    let total = mu.total_mass();
    let t: Vec<f64> = mu.atoms.iter().map(|a| a.t).collect();
    let mut basis: Vec<Vec<f64>> = vec![mu.atoms.iter().map(|a| (a.w / total).sqrt()).collect()];
    let (mut q, mut rho) = (Vec::with_capacity(n), Vec::with_capacity(n - 1));
    for j in 0..n {
        let cur = &basis[j];
        let mut v: Vec<f64> = cur.iter().zip(&t).map(|(x, t)| x * t).collect();
        let alpha: f64 = v.iter().zip(cur).map(|(a, b)| a * b).sum();
        q.push(alpha);
        if j + 1 == n {
            break;
        }
        for _ in 0..2 {
            for b in &basis {
                let c: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(b).for_each(|(a, b)| *a -= c * b);
            }
        }
        let beta = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(beta > 0.0) {
            return Err(Error::numerical("Lanczos breakdown"));
        }
        rho.push(beta);
        basis.push(v.into_iter().map(|a| a / beta).collect());
    }
    Ok((JacobiMatrix::new(q, rho)?, total))
}
