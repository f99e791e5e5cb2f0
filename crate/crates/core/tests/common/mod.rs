#![allow(dead_code)]

use carma_levy_core::{CarmaModel, DMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The model used throughout the simulation study: `P(z) = z³ + 2z² + 1.5z + 0.5`,
/// `Q(z) = 1 + z`.
pub fn study_model() -> CarmaModel {
    CarmaModel::scalar(&[2.0, 1.5, 0.5], &[1.0, 1.0]).unwrap()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Coefficients `c_1..c_n` of `Π (zI + F_i)` as a monic matrix polynomial,
/// where each `F_i` is given.
fn expand(factors: &[DMatrix<f64>], m: usize) -> Vec<DMatrix<f64>> {
    // coefficients in ascending powers of z
    let mut poly = vec![DMatrix::identity(m, m)];
    for f in factors {
        let mut next = vec![DMatrix::zeros(m, m); poly.len() + 1];
        for (k, c) in poly.iter().enumerate() {
            next[k + 1] += c;
            next[k] += c * f;
        }
        poly = next;
    }
    // descending, dropping the leading identity: A_1 .. A_n
    poly.iter().rev().skip(1).cloned().collect()
}

/// A random model with `P(z) = Π (zI + F_i)`, `Q(z) = Σ B_j z^j` whose zeros
/// all lie in the left half-plane, so both standing assumptions hold.
pub fn random_model<R: Rng>(rng: &mut R, p: usize, q: usize, m: usize) -> CarmaModel {
    let shifted = |rng: &mut R| {
        let c = rng.random_range(0.3..2.0);
        DMatrix::identity(m, m) * c + random_matrix(rng, m, m, 0.1)
    };
    let ar_factors: Vec<_> = (0..p).map(|_| shifted(rng)).collect();
    let ar = expand(&ar_factors, m);
    let ma_factors: Vec<_> = (0..q).map(|_| shifted(rng)).collect();
    let monic = expand(&ma_factors, m);
    let lead = DMatrix::identity(m, m) * rng.random_range(0.5..1.5) + random_matrix(rng, m, m, 0.1);
    // B_q = lead, B_{q-k} = lead · monic_k
    let mut ma = vec![DMatrix::zeros(m, m); q + 1];
    ma[q] = lead.clone();
    for (k, c) in monic.iter().enumerate() {
        ma[q - 1 - k] = &lead * c;
    }
    CarmaModel::new(ar, ma).unwrap()
}
