use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Coeff:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn abs(self) -> f64;
    fn to_c(self) -> C64;
    fn conj(self) -> Self;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn to_c(self) -> C64 {
        C64::new(self, 0.0)
    }
    fn conj(self) -> Self {
        self
    }
}

impl Coeff for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn to_c(self) -> C64 {
        self
    }
    fn conj(self) -> Self {
        C64::conj(&self)
    }
}

/// Dense polynomial with ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Poly<T> {
    pub coeffs: Vec<T>,
}

pub type RealPolynomial = Poly<f64>;
pub type ComplexPolynomial = Poly<C64>;

pub const HYGIENE: f64 = 1e-12;

impl<T: Coeff> Poly<T> {
    /// Builds a polynomial and drops trailing coefficients below
    /// `HYGIENE` times the largest magnitude.
    pub fn new(coeffs: Vec<T>) -> Self {
        let mut p = Self::from_raw(coeffs);
        p.prune(HYGIENE);
        p
    }

    /// Keeps every coefficient except exact trailing zeros.
    pub fn from_raw(mut coeffs: Vec<T>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.abs() == 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        Self { coeffs }
    }

    pub fn prune(&mut self, rel: f64) {
        let m = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        while self.coeffs.len() > 1 && self.coeffs.last().is_some_and(|c| c.abs() <= rel * m) {
            self.coeffs.pop();
        }
        if m == 0.0 {
            self.coeffs = vec![T::zero()];
        }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![T::zero()] }
    }

    pub fn constant(c: T) -> Self {
        Self::from_raw(vec![c])
    }

    /// The polynomial z.
    pub fn x() -> Self {
        Self::from_raw(vec![T::zero(), T::one()])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.abs() == 0.0)
    }

    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).copied().unwrap_or_else(T::zero)
    }

    pub fn leading(&self) -> T {
        *self.coeffs.last().unwrap()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    pub fn eval_c(&self, z: C64) -> C64 {
        self.coeffs.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c.to_c())
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        let d = self.coeffs[1..].iter().enumerate().map(|(k, &c)| c * T::from_f64((k + 1) as f64)).collect();
        Self::from_raw(d)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_raw(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = vec![T::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] = out[i + j] + a * b;
            }
        }
        Self::from_raw(out)
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        Self::from_raw((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }

    pub fn sub(&self, o: &Self) -> Self {
        let n = self.coeffs.len().max(o.coeffs.len());
        Self::from_raw((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }

    /// Multiplies by z^k.
    pub fn shift(&self, k: usize) -> Self {
        let mut c = vec![T::zero(); k];
        c.extend_from_slice(&self.coeffs);
        Self::from_raw(c)
    }

    /// Keeps coefficients of degree ≤ `deg`.
    pub fn truncate(&self, deg: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.truncate(deg + 1);
        Self::from_raw(c)
    }

    /// Division by (z − r): returns quotient and remainder p(r).
    pub fn deflate(&self, r: T) -> (Self, T) {
        let n = self.degree();
        if n == 0 {
            return (Self::zero(), self.coeffs[0]);
        }
        let mut q = vec![T::zero(); n];
        let mut acc = self.coeffs[n];
        for k in (0..n).rev() {
            q[k] = acc;
            acc = self.coeffs[k] + acc * r;
        }
        (Self::from_raw(q), acc)
    }

    /// Euclidean division; the divisor must be nonzero.
    pub fn div_rem(&self, d: &Self) -> Result<(Self, Self)> {
        if d.is_zero() {
            return Err(Error::validation("division by zero polynomial"));
        }
        let dn = d.degree();
        if self.degree() < dn {
            return Ok((Self::zero(), self.clone()));
        }
        let mut r = self.coeffs.clone();
        let lead = d.leading();
        let mut q = vec![T::zero(); self.degree() - dn + 1];
        for k in (0..q.len()).rev() {
            let c = r[k + dn] / lead;
            q[k] = c;
            for j in 0..=dn {
                r[k + j] = r[k + j] - c * d.coeffs[j];
            }
            r[k + dn] = T::zero();
        }
        r.truncate(dn.max(1));
        Ok((Self::from_raw(q), Self::from_raw(r)))
    }

    /// p*(z) = conj(p(conj z)).
    pub fn star(&self) -> Self {
        Self::from_raw(self.coeffs.iter().map(|c| c.conj()).collect())
    }

    pub fn to_complex(&self) -> ComplexPolynomial {
        Poly::from_raw(self.coeffs.iter().map(|c| c.to_c()).collect())
    }

    pub fn from_roots(roots: &[T], lead: T) -> Self {
        let mut p = Self::constant(lead);
        for &r in roots {
            p = p.mul(&Self::from_raw(vec![-r, T::one()]));
        }
        p
    }

    /// Largest coefficient difference.
    pub fn dist(&self, o: &Self) -> f64 {
        let n = self.coeffs.len().max(o.coeffs.len());
        (0..n).fold(0.0f64, |m, k| m.max((self.coeff(k) - o.coeff(k)).abs()))
    }
}

impl ComplexPolynomial {
    pub fn real_part(&self) -> RealPolynomial {
        Poly::from_raw(self.coeffs.iter().map(|c| c.re).collect())
    }

    pub fn imag_part(&self) -> RealPolynomial {
        Poly::from_raw(self.coeffs.iter().map(|c| c.im).collect())
    }

    /// ln|p(z)| via the factored form, safe against overflow.
    pub fn ln_abs(&self, z: C64, roots: &[C64]) -> f64 {
        roots.iter().fold(self.leading().norm().ln(), |acc, r| acc + (z - r).norm().ln())
    }
}

impl RealPolynomial {
    pub fn real_roots(&self, tol: f64) -> Result<Vec<crate::roots::RealRoot>> {
        crate::roots::poly_real_roots(self, tol)
    }

    /// Compensated Horner evaluation, accurate as if computed in twice the
    /// working precision.
    pub fn eval_compensated(&self, x: f64) -> f64 {
        let mut s = *self.coeffs.last().unwrap();
        let mut c = 0.0f64;
        for &a in self.coeffs.iter().rev().skip(1) {
            let p = s * x;
            let pe = s.mul_add(x, -p);
            let t = p + a;
            let z = t - p;
            let te = (p - (t - z)) + (a - z);
            s = t;
            c = c.mul_add(x, pe + te);
        }
        s + c
    }
}
