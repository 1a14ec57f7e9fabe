//! Direct and inverse spectral theory of 2×2 canonical systems J Y′ = zHY.

pub mod error;
pub mod linalg;
pub mod poly;
pub mod quad;
pub mod roots;

pub mod debranges;
pub mod evolve;
pub mod hamiltonian;
pub mod inverse;
pub mod jacobi;
pub mod measure;
pub mod weyl;

pub use error::{Error, Result};
pub use linalg::{Complex2Vector, Matrix2, Sym2};
pub use num_complex::Complex64 as C64;
pub use poly::{ComplexPolynomial, RealPolynomial};
