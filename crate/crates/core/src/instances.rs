//! Seeded random test instances on abstract (non-grid) spaces.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::operator::{Family, SymmetricOperator};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric matrix with standard normal entries (GOE-like), weight 1.
pub fn random_symmetric(n: usize, seed: u64) -> SymmetricOperator {
    let mut r = rng(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = r.sample(StandardNormal);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymmetricOperator::from_dense_upper(&m, 1.0, format!("random_symmetric(n={n}, seed={seed})"))
        .expect("square by construction")
}

/// Unit vector in the metric `w·Σ f_i²`.
pub fn random_unit_vector(n: usize, weight: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let norm = (weight * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Diagonal `u²` with exactly `rank` nonzero entries in `[0.1, 1]`.
pub fn random_coupling(n: usize, rank: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut u2 = vec![0.0; n];
    for i in sample(&mut r, n, rank.min(n)).into_iter() {
        u2[i] = r.random_range(0.1..=1.0);
    }
    u2
}

/// `H_0 + ω·u²` with random `H_0` and a random rank-`rank` coupling.
pub fn random_family(n: usize, rank: usize, seed: u64) -> Family {
    let h0 = random_symmetric(n, seed);
    let u2 = random_coupling(n, rank, seed ^ 0x5EED);
    Family::new(h0, u2).expect("nonnegative coupling")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        assert_eq!(random_symmetric(5, 1).to_dense(), random_symmetric(5, 1).to_dense());
        assert_ne!(random_symmetric(5, 1).to_dense(), random_symmetric(5, 2).to_dense());
    }

    #[test]
    fn unit_and_rank() {
        let v = random_unit_vector(9, 0.25, 4);
        let n2: f64 = 0.25 * v.iter().map(|x| x * x).sum::<f64>();
        assert!((n2 - 1.0).abs() < 1e-14);
        let u2 = random_coupling(16, 4, 3);
        assert_eq!(u2.iter().filter(|&&c| c > 0.0).count(), 4);
        assert!(u2.iter().all(|&c| c == 0.0 || (0.1..=1.0).contains(&c)));
    }
}
