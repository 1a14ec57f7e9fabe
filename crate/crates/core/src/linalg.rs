use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Pair (Y₊, Y₋).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex2Vector {
    pub plus: C64,
    pub minus: C64,
}

impl Complex2Vector {
    pub fn new(plus: C64, minus: C64) -> Self {
        Self { plus, minus }
    }

    pub fn real(plus: f64, minus: f64) -> Self {
        Self::new(C64::new(plus, 0.0), C64::new(minus, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.plus.norm_sqr() + self.minus.norm_sqr()
    }

    /// Hermitian product ⟨self, other⟩ = self · conj(other).
    pub fn dot(&self, other: &Self) -> C64 {
        self.plus * other.plus.conj() + self.minus * other.minus.conj()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matrix2 {
    pub m11: C64,
    pub m12: C64,
    pub m21: C64,
    pub m22: C64,
}

impl Matrix2 {
    pub const fn new(m11: C64, m12: C64, m21: C64, m22: C64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub fn real(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self::new(m11.into(), m12.into(), m21.into(), m22.into())
    }

    pub fn identity() -> Self {
        Self::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn zero() -> Self {
        Self::real(0.0, 0.0, 0.0, 0.0)
    }

    pub fn j() -> Self {
        Self::real(0.0, -1.0, 1.0, 0.0)
    }

    pub fn from_sym(s: &Sym2) -> Self {
        Self::real(s.a, s.b, s.b, s.c)
    }

    pub fn det(&self) -> C64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn trace(&self) -> C64 {
        self.m11 + self.m22
    }

    pub fn scale(&self, s: C64) -> Self {
        Self::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.m11.conj(), self.m21.conj(), self.m12.conj(), self.m22.conj())
    }

    pub fn conj(&self) -> Self {
        Self::new(self.m11.conj(), self.m12.conj(), self.m21.conj(), self.m22.conj())
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.m11, self.m21, self.m12, self.m22)
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Self::new(self.m22, -self.m12, -self.m21, self.m11).scale(d.inv()))
    }

    pub fn apply(&self, v: &Complex2Vector) -> Complex2Vector {
        Complex2Vector::new(self.m11 * v.plus + self.m12 * v.minus, self.m21 * v.plus + self.m22 * v.minus)
    }

    pub fn col1(&self) -> Complex2Vector {
        Complex2Vector::new(self.m11, self.m21)
    }

    pub fn col2(&self) -> Complex2Vector {
        Complex2Vector::new(self.m12, self.m22)
    }

    pub fn max_abs(&self) -> f64 {
        self.m11.norm().max(self.m12.norm()).max(self.m21.norm()).max(self.m22.norm())
    }

    pub fn frobenius(&self) -> f64 {
        (self.m11.norm_sqr() + self.m12.norm_sqr() + self.m21.norm_sqr() + self.m22.norm_sqr()).sqrt()
    }

    /// Spectral norm (largest singular value).
    pub fn norm2(&self) -> f64 {
        let f2 = self.m11.norm_sqr() + self.m12.norm_sqr() + self.m21.norm_sqr() + self.m22.norm_sqr();
        let d = self.det().norm();
        let disc = (f2 * f2 - 4.0 * d * d).max(0.0).sqrt();
        ((f2 + disc) / 2.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m11.is_finite() && self.m12.is_finite() && self.m21.is_finite() && self.m22.is_finite()
    }

    /// exp of a traceless matrix, returned as (e^{-k}·exp(self), k) so that
    /// large arguments never overflow.
    pub fn exp_traceless_scaled(&self) -> (Self, f64) {
        let s = (-self.det()).sqrt();
        let k = s.re.abs();
        let (c, sh) = if s.norm() < 0.1 {
            let s2 = s * s;
            let s4 = s2 * s2;
            let c = ONE + s2 / 2.0 + s4 / 24.0 + s4 * s2 / 720.0 + s4 * s4 / 40320.0;
            let sh = ONE + s2 / 6.0 + s4 / 120.0 + s4 * s2 / 5040.0 + s4 * s4 / 362880.0;
            (c * (-k).exp(), sh * (-k).exp())
        } else {
            let ep = (s - k).exp();
            let em = (-s - k).exp();
            ((ep + em) / 2.0, (ep - em) / (2.0 * s))
        };
        (Self::identity().scale(c) + self.scale(sh), k)
    }

    pub fn exp_traceless(&self) -> Self {
        let (m, k) = self.exp_traceless_scaled();
        m.scale(C64::new(k.exp(), 0.0))
    }

    pub fn dist(&self, other: &Self) -> f64 {
        (*self - *other).max_abs()
    }
}

impl Mul for Matrix2 {
    type Output = Matrix2;
    fn mul(self, b: Matrix2) -> Matrix2 {
        Matrix2::new(
            self.m11 * b.m11 + self.m12 * b.m21,
            self.m11 * b.m12 + self.m12 * b.m22,
            self.m21 * b.m11 + self.m22 * b.m21,
            self.m21 * b.m12 + self.m22 * b.m22,
        )
    }
}

impl Add for Matrix2 {
    type Output = Matrix2;
    fn add(self, b: Matrix2) -> Matrix2 {
        Matrix2::new(self.m11 + b.m11, self.m12 + b.m12, self.m21 + b.m21, self.m22 + b.m22)
    }
}

impl Sub for Matrix2 {
    type Output = Matrix2;
    fn sub(self, b: Matrix2) -> Matrix2 {
        Matrix2::new(self.m11 - b.m11, self.m12 - b.m12, self.m21 - b.m21, self.m22 - b.m22)
    }
}

impl Neg for Matrix2 {
    type Output = Matrix2;
    fn neg(self) -> Matrix2 {
        self.scale(C64::new(-1.0, 0.0))
    }
}

pub fn mat2_mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    *a * *b
}

/// Real symmetric 2×2 matrix [[a, b], [b, c]].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn diag(a: f64, c: f64) -> Self {
        Self::new(a, 0.0, c)
    }

    /// ⟨·, e⟩e scaled by `w`.
    pub fn rank_one(angle: f64, w: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(w * c * c, w * c * s, w * s * s)
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = 0.5 * (self.a + self.c);
        let r = (0.25 * (self.a - self.c).powi(2) + self.b * self.b).sqrt();
        m - r
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }

    pub fn lerp(&self, o: &Self, t: f64) -> Self {
        self.scale(1.0 - t).add(&o.scale(t))
    }

    pub fn dist(&self, o: &Self) -> f64 {
        (self.a - o.a).abs().max((self.b - o.b).abs()).max((self.c - o.c).abs())
    }

    pub fn quad(&self, v: &Complex2Vector) -> f64 {
        let hv = Complex2Vector::new(v.plus * self.a + v.minus * self.b, v.plus * self.b + v.minus * self.c);
        hv.dot(v).re
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    pub fn to_rows(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.b, self.c]]
    }
}

impl TryFrom<[[f64; 2]; 2]> for Sym2 {
    type Error = String;
    fn try_from(m: [[f64; 2]; 2]) -> std::result::Result<Self, String> {
        let scale = m[0][1].abs().max(m[1][0].abs()).max(1.0);
        if (m[0][1] - m[1][0]).abs() > 1e-12 * scale {
            return Err(format!("matrix not symmetric: {:?}", m));
        }
        Ok(Sym2::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]))
    }
}

impl From<Sym2> for [[f64; 2]; 2] {
    fn from(s: Sym2) -> Self {
        s.to_rows()
    }
}

/// Circle through three points; `None` when collinear.
pub fn circumcircle(p: C64, q: C64, r: C64) -> Option<(C64, f64)> {
    let b = q - p;
    let c = r - p;
    let d = 2.0 * (b.re * c.im - b.im * c.re);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let b2 = b.norm_sqr();
    let c2 = c.norm_sqr();
    let ux = (c.im * b2 - b.im * c2) / d;
    let uy = (b.re * c2 - c.re * b2) / d;
    let u = C64::new(ux, uy);
    Some((p + u, u.norm()))
}
