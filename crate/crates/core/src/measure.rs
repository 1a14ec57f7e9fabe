use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub w: f64,
}

/// Finite positive measure Σ w δ_t, kept sorted by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawMeasure {
    atoms: Vec<Atom>,
}

impl TryFrom<RawMeasure> for AtomicMeasure {
    type Error = Error;
    fn try_from(r: RawMeasure) -> Result<Self> {
        AtomicMeasure::new(r.atoms)
    }
}

impl AtomicMeasure {
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        if atoms.iter().any(|a| !a.t.is_finite() || !a.w.is_finite() || a.w <= 0.0) {
            return Err(Error::validation("atoms need finite positions and positive weights"));
        }
        atoms.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        if atoms.windows(2).any(|p| p[0].t == p[1].t) {
            return Err(Error::validation("duplicate atom positions"));
        }
        Ok(Self { atoms })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(t, w)| Atom { t, w }).collect())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass_at(&self, t: f64) -> Option<f64> {
        self.atoms.iter().find(|a| a.t == t).map(|a| a.w)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }
}
