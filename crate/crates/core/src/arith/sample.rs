//! Secret, error and uniform samplers. All take an explicit seeded RNG.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use super::{Domain, RnsBasis, RnsPoly};

/// Error standard deviation.
pub const ERROR_STD_DEV: f64 = 3.2;
/// Error samples are rejected beyond this many deviations.
const TAIL_CUT: f64 = 6.0;

/// Uniform coefficients in `{-1, 0, 1}`.
pub fn ternary(n: usize, rng: &mut impl RngCore) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

/// Rounded Gaussian with standard deviation [`ERROR_STD_DEV`], tail-cut.
pub fn gaussian(n: usize, rng: &mut impl RngCore) -> Vec<i64> {
    let normal = Normal::new(0.0, ERROR_STD_DEV).expect("valid deviation");
    (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= TAIL_CUT * ERROR_STD_DEV {
                break v.round() as i64;
            }
        })
        .collect()
}

/// Independent uniform residues per limb, tagged with the requested domain.
pub fn uniform(basis: &Arc<RnsBasis>, domain: Domain, rng: &mut impl RngCore) -> RnsPoly {
    let limbs = basis
        .moduli()
        .iter()
        .map(|m| (0..basis.degree()).map(|_| rng.random_range(0..m.value())).collect())
        .collect();
    RnsPoly::from_limbs(basis, limbs, domain).expect("sampled residues are reduced")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn gaussian_deviation_in_range() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let s = gaussian(1 << 14, &mut rng);
        let mean = s.iter().sum::<i64>() as f64 / s.len() as f64;
        let var = s.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / s.len() as f64;
        assert!((2.9..=3.5).contains(&var.sqrt()), "{}", var.sqrt());
    }

    #[test]
    fn ternary_is_balanced() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let s = ternary(30_000, &mut rng);
        for v in -1..=1 {
            let c = s.iter().filter(|&&x| x == v).count();
            assert!((9_000..11_000).contains(&c));
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let a = ternary(64, &mut ChaCha20Rng::seed_from_u64(1));
        let b = ternary(64, &mut ChaCha20Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }
}
