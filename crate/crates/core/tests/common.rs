#![allow(dead_code)]

use canon_core::hamiltonian::{Hamiltonian, Segment};
use canon_core::Sym2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_psd(r: &mut ChaCha8Rng) -> Sym2 {
    let a: f64 = r.gen_range(0.05..1.0);
    let c: f64 = r.gen_range(0.05..1.0);
    let b = r.gen_range(-0.95..0.95) * (a * c).sqrt();
    let m = Sym2::new(a, b, c);
    m.scale(1.0 / m.trace())
}

/// Random trace-normalized Hamiltonian mixing all segment kinds.
pub fn random_hamiltonian(r: &mut ChaCha8Rng, max_len: f64) -> Hamiltonian {
    let n = r.gen_range(1..=4);
    let mut segs = Vec::new();
    for _ in 0..n {
        let len = r.gen_range(0.1..1.0) * max_len / n as f64;
        let seg = match r.gen_range(0..3) {
            0 => Segment::rank_one(len, r.gen_range(0.0..std::f64::consts::PI)),
            1 => Segment::constant(len, random_psd(r)),
            _ => {
                let k = r.gen_range(2..6);
                Segment::sampled(len, (0..k).map(|_| random_psd(r)).collect())
            }
        };
        segs.push(seg);
    }
    Hamiltonian::new(segs).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
