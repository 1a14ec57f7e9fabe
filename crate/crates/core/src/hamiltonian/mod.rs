mod reduce;

pub use reduce::{
    boundary_parameter_map, dirac_to_canonical, schrodinger_to_canonical, string_to_canonical, BoundaryValue,
    DiracContext, SchrodingerContext, StringDensity,
};

use crate::error::{Error, Result};
use crate::linalg::Sym2;
use crate::quad::gauss_on;
use log::warn;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const PSD_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;

fn unit_weight() -> f64 {
    1.0
}

fn is_unit(w: &f64) -> bool {
    *w == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    /// H = w⟨·, e⟩e with e = (cos θ, sin θ).
    RankOne {
        angle: f64,
        #[serde(default = "unit_weight", skip_serializing_if = "is_unit")]
        weight: f64,
    },
    Constant {
        matrix: Sym2,
    },
    /// Samples on a uniform grid, linearly interpolated.
    Sampled {
        #[serde(default)]
        n: usize,
        matrices: Vec<Sym2>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(serialize_with = "ser_length", deserialize_with = "de_length")]
    pub length: f64,
    #[serde(flatten)]
    pub kind: SegmentKind,
}

fn ser_length<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

fn de_length<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Len {
        Num(f64),
        Text(String),
    }
    match Len::deserialize(d)? {
        Len::Num(x) => Ok(x),
        Len::Text(t) if t == "inf" || t == "infinity" => Ok(f64::INFINITY),
        Len::Text(t) => Err(serde::de::Error::custom(format!("bad length {t}"))),
    }
}

impl Segment {
    pub fn rank_one(length: f64, angle: f64) -> Self {
        Self { length, kind: SegmentKind::RankOne { angle, weight: 1.0 } }
    }

    pub fn constant(length: f64, matrix: Sym2) -> Self {
        Self { length, kind: SegmentKind::Constant { matrix } }
    }

    pub fn sampled(length: f64, matrices: Vec<Sym2>) -> Self {
        Self { length, kind: SegmentKind::Sampled { n: matrices.len(), matrices } }
    }

    /// H at local position t ∈ [0, length].
    pub fn value_at(&self, t: f64) -> Sym2 {
        match &self.kind {
            SegmentKind::RankOne { angle, weight } => Sym2::rank_one(*angle, *weight),
            SegmentKind::Constant { matrix } => *matrix,
            SegmentKind::Sampled { matrices, .. } => {
                let cells = (matrices.len() - 1) as f64;
                let u = (t / self.length).clamp(0.0, 1.0) * cells;
                let k = (u.floor() as usize).min(matrices.len() - 2);
                matrices[k].lerp(&matrices[k + 1], u - k as f64)
            }
        }
    }

    /// ∫ over the first `t` units of the segment.
    pub fn integral(&self, t: f64) -> Sym2 {
        match &self.kind {
            SegmentKind::RankOne { angle, weight } => Sym2::rank_one(*angle, *weight).scale(t),
            SegmentKind::Constant { matrix } => matrix.scale(t),
            SegmentKind::Sampled { matrices, .. } => {
                let h = self.length / (matrices.len() - 1) as f64;
                let mut acc = Sym2::new(0.0, 0.0, 0.0);
                for k in 0..matrices.len() - 1 {
                    let lo = k as f64 * h;
                    if lo >= t {
                        break;
                    }
                    let hi = ((k + 1) as f64 * h).min(t);
                    let a = self.value_at(lo);
                    let b = self.value_at(hi);
                    acc = acc.add(&a.add(&b).scale(0.5 * (hi - lo)));
                }
                acc
            }
        }
    }

    pub fn is_normalized(&self) -> bool {
        match &self.kind {
            SegmentKind::RankOne { weight, .. } => (weight - 1.0).abs() <= TRACE_TOL,
            SegmentKind::Constant { matrix } => (matrix.trace() - 1.0).abs() <= TRACE_TOL,
            SegmentKind::Sampled { matrices, .. } => matrices.iter().all(|m| (m.trace() - 1.0).abs() <= TRACE_TOL),
        }
    }

    fn validate(&self, last: bool) -> Result<()> {
        let ok_len = self.length > 0.0 && (self.length.is_finite() || last);
        if !ok_len || self.length.is_nan() {
            return Err(Error::validation(format!("invalid segment length {}", self.length)));
        }
        let check = |m: &Sym2| -> Result<()> {
            if !m.is_finite() || m.min_eigenvalue() < -PSD_TOL * m.trace().abs().max(1.0) {
                return Err(Error::validation(format!("matrix not psd: {:?}", m.to_rows())));
            }
            Ok(())
        };
        match &self.kind {
            SegmentKind::RankOne { angle, weight } => {
                if !angle.is_finite() || !weight.is_finite() || *weight <= 0.0 {
                    return Err(Error::validation("rank-one segment needs finite angle and positive weight"));
                }
            }
            SegmentKind::Constant { matrix } => check(matrix)?,
            SegmentKind::Sampled { n, matrices } => {
                if matrices.len() < 2 {
                    return Err(Error::validation("sampled segment needs at least 2 samples"));
                }
                if *n != 0 && *n != matrices.len() {
                    return Err(Error::validation(format!(
                        "sampled segment declares n = {} but has {} matrices",
                        n,
                        matrices.len()
                    )));
                }
                if !self.length.is_finite() {
                    return Err(Error::validation("sampled segment must have finite length"));
                }
                for m in matrices {
                    check(m)?;
                }
            }
        }
        Ok(())
    }
}

fn same_direction(a: &Segment, b: &Segment) -> bool {
    match (&a.kind, &b.kind) {
        (SegmentKind::RankOne { angle: t1, weight: w1 }, SegmentKind::RankOne { angle: t2, weight: w2 }) => {
            (t1 - t2).sin().abs() <= 1e-12 && (w1 - w2).abs() <= 1e-12
        }
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHamiltonian")]
pub struct Hamiltonian {
    pub trace_normalized: bool,
    pub segments: Vec<Segment>,
}

#[derive(Deserialize)]
struct RawHamiltonian {
    #[serde(default)]
    trace_normalized: Option<bool>,
    segments: Vec<Segment>,
}

impl TryFrom<RawHamiltonian> for Hamiltonian {
    type Error = Error;
    fn try_from(raw: RawHamiltonian) -> Result<Self> {
        let h = Hamiltonian::new(raw.segments)?;
        if raw.trace_normalized == Some(true) && !h.trace_normalized {
            return Err(Error::validation("flagged trace_normalized but tr H ≠ 1"));
        }
        Ok(h)
    }
}

impl Hamiltonian {
    /// Validates segments and merges adjacent parallel rank-one pieces.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::validation("Hamiltonian has no segments"));
        }
        let n = segments.len();
        for (i, s) in segments.iter().enumerate() {
            s.validate(i + 1 == n)?;
        }
        let mut merged: Vec<Segment> = Vec::with_capacity(n);
        for s in segments {
            match merged.last_mut() {
                Some(prev) if same_direction(prev, &s) => prev.length += s.length,
                _ => merged.push(s),
            }
        }
        let trace_normalized = merged.iter().all(|s| s.is_normalized());
        Ok(Self { trace_normalized, segments: merged })
    }

    /// H = I/2 on (0, length).
    pub fn free(length: f64) -> Self {
        Self::new(vec![Segment::constant(length, Sym2::diag(0.5, 0.5))]).expect("valid free system")
    }

    /// Rank-one chain from (length, angle) pairs.
    pub fn chain(pieces: &[(f64, f64)]) -> Result<Self> {
        Self::new(pieces.iter().map(|&(l, a)| Segment::rank_one(l, a)).collect())
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn is_semi_infinite(&self) -> bool {
        self.total_length().is_infinite()
    }

    pub fn starts(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let a = acc;
                acc += s.length;
                a
            })
            .collect()
    }

    pub fn value_at(&self, x: f64) -> Sym2 {
        let mut start = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            if x < start + s.length || i + 1 == self.segments.len() {
                return s.value_at(x - start);
            }
            start += s.length;
        }
        unreachable!()
    }

    pub fn is_all_rank_one(&self) -> bool {
        self.segments.iter().all(|s| matches!(s.kind, SegmentKind::RankOne { .. }))
    }

    /// True when H = diag(0, c) a.e. on (0, x).
    pub fn is_jacobi_degenerate(&self, x: f64) -> bool {
        let mut start = 0.0;
        for s in &self.segments {
            if start >= x {
                break;
            }
            let vertical = match &s.kind {
                SegmentKind::RankOne { angle, .. } => angle.cos().abs() <= 1e-12,
                SegmentKind::Constant { matrix } => matrix.a.abs() <= 1e-14 && matrix.b.abs() <= 1e-14,
                SegmentKind::Sampled { matrices, .. } => {
                    matrices.iter().all(|m| m.a.abs() <= 1e-14 && m.b.abs() <= 1e-14)
                }
            };
            if !vertical {
                return false;
            }
            start += s.length;
        }
        true
    }

    /// Same Hamiltonian with its last segment extended to +∞.
    pub fn extend_to_infinity(&self) -> Result<Self> {
        let mut segs = self.segments.clone();
        let last = segs.last_mut().unwrap();
        if matches!(last.kind, SegmentKind::Sampled { .. }) {
            return Err(Error::validation("cannot extend a sampled segment to infinity"));
        }
        last.length = f64::INFINITY;
        Self::new(segs)
    }
}

/// Piecewise-linear monotone map ξ with ξ(0) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reparametrization {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x).max(1) - 1;
    let k = k.min(n - 2);
    let dx = xs[k + 1] - xs[k];
    if dx <= 0.0 {
        return ys[k];
    }
    ys[k] + (ys[k + 1] - ys[k]) * (x - xs[k]) / dx
}

impl Reparametrization {
    pub fn identity(length: f64) -> Self {
        Self { grid: vec![0.0, length], values: vec![0.0, length] }
    }

    pub fn forward(&self, x: f64) -> f64 {
        interp(&self.grid, &self.values, x)
    }

    /// Smallest x with ξ(x) = s.
    pub fn inverse(&self, s: f64) -> f64 {
        let n = self.values.len();
        if s <= self.values[0] {
            return self.grid[0];
        }
        if s >= self.values[n - 1] {
            return self.grid[n - 1];
        }
        let k = self.values.partition_point(|&v| v < s).max(1) - 1;
        let dv = self.values[k + 1] - self.values[k];
        if dv <= 0.0 {
            return self.grid[k];
        }
        self.grid[k] + (self.grid[k + 1] - self.grid[k]) * (s - self.values[k]) / dv
    }

    fn push(&mut self, x: f64, v: f64) {
        if self.grid.last().is_none_or(|&g| x > g) {
            self.grid.push(x);
            self.values.push(v);
        }
    }
}

/// Local position in a cell with trace t0 → t1 (linear) where the
/// accumulated trace equals `target`.
fn solve_cell(t0: f64, t1: f64, h: f64, target: f64) -> f64 {
    let slope = (t1 - t0) / h;
    if slope.abs() <= 1e-14 * t0.abs().max(t1.abs()) {
        return if t0 > 0.0 { (target / t0).min(h) } else { 0.0 };
    }
    let disc = (t0 * t0 + 2.0 * slope * target).max(0.0);
    let u = 2.0 * target / (t0 + disc.sqrt());
    u.clamp(0.0, h)
}

fn normalize_sampled(
    seg: &Segment,
    matrices: &[Sym2],
    rep: &mut Reparametrization,
    x0: f64,
    xi0: f64,
) -> Option<Segment> {
    let n = matrices.len();
    let h = seg.length / (n - 1) as f64;
    let tr: Vec<f64> = matrices.iter().map(|m| m.trace()).collect();
    let mut cum = vec![0.0; n];
    for k in 1..n {
        cum[k] = cum[k - 1] + 0.5 * h * (tr[k - 1] + tr[k]);
    }
    for k in 0..n - 1 {
        for j in 0..8 {
            let u = h * j as f64 / 8.0;
            let v = cum[k] + tr[k] * u + 0.5 * (tr[k + 1] - tr[k]) / h * u * u;
            rep.push(x0 + k as f64 * h + u, xi0 + v);
        }
        if tr[k] == 0.0 && tr[k + 1] == 0.0 {
            warn!("zero-trace region of length {h} excised");
        }
    }
    rep.push(x0 + seg.length, xi0 + cum[n - 1]);
    let total = cum[n - 1];
    if total <= 0.0 {
        warn!("zero-trace sampled segment of length {} excised", seg.length);
        return None;
    }
    let out: Vec<Sym2> = (0..n)
        .map(|j| {
            let s = total * j as f64 / (n - 1) as f64;
            let k = (cum.partition_point(|&c| c < s).max(1) - 1).min(n - 2);
            let mut u = solve_cell(tr[k], tr[k + 1], h, s - cum[k]);
            let mut m = matrices[k].lerp(&matrices[k + 1], u / h);
            if m.trace() <= 1e-300 {
                u = if tr[k + 1] > tr[k] { h } else { 0.0 };
                m = matrices[k].lerp(&matrices[k + 1], u / h);
                if m.trace() <= 1e-300 {
                    m = if tr[k + 1] > 0.0 { matrices[k + 1] } else { matrices[k] };
                }
            }
            m.scale(1.0 / m.trace())
        })
        .collect();
    Some(Segment::sampled(total, out))
}

/// Reparametrizes by ξ(x) = ∫₀ˣ tr H so that tr H ≡ 1.
pub fn normalize_trace(h: &Hamiltonian) -> Result<(Hamiltonian, Reparametrization)> {
    let mut rep = Reparametrization { grid: vec![0.0], values: vec![0.0] };
    let mut out = Vec::with_capacity(h.segments.len());
    let (mut x, mut xi) = (0.0, 0.0);
    for seg in &h.segments {
        let next = match &seg.kind {
            SegmentKind::RankOne { angle, weight } => Some(Segment::rank_one(seg.length * weight, *angle)),
            SegmentKind::Constant { matrix } => {
                let t = matrix.trace();
                if t <= 0.0 {
                    warn!("zero-trace constant segment of length {} excised", seg.length);
                    None
                } else {
                    Some(Segment::constant(seg.length * t, matrix.scale(1.0 / t)))
                }
            }
            SegmentKind::Sampled { matrices, .. } => {
                if seg.is_normalized() {
                    Some(seg.clone())
                } else {
                    normalize_sampled(seg, matrices, &mut rep, x, xi)
                }
            }
        };
        let dxi = next.as_ref().map_or(0.0, |s| s.length);
        x += seg.length;
        xi += dxi;
        if x.is_finite() {
            rep.push(x, xi);
        }
        if let Some(s) = next {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::validation("Hamiltonian has zero trace everywhere"));
    }
    Ok((Hamiltonian::new(out)?, rep))
}

/// ∫ √det H over the whole interval.
pub fn exact_type(h: &Hamiltonian) -> f64 {
    h.segments
        .iter()
        .map(|s| match &s.kind {
            SegmentKind::RankOne { .. } => 0.0,
            SegmentKind::Constant { matrix } => s.length * matrix.det().max(0.0).sqrt(),
            SegmentKind::Sampled { matrices, .. } => {
                let cells = matrices.len() - 1;
                let hc = s.length / cells as f64;
                (0..cells)
                    .map(|k| {
                        gauss_on(0.0, 1.0, 8)
                            .iter()
                            .map(|&(u, w)| w * hc * matrices[k].lerp(&matrices[k + 1], u).det().max(0.0).sqrt())
                            .sum::<f64>()
                    })
                    .sum()
            }
        })
        .sum()
}
