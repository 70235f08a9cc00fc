//! Input generators shared by the benchmarks.

use rand::Rng;
use sprb_core::rng::seeded;

/// `len` rewards, each nonzero with probability `density`.
pub fn sparse_episode(len: usize, density: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..len)
        .map(|_| {
            if rng.gen_bool(density) {
                rng.gen_range(1..4) as f64
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_and_determinism() {
        let a = sparse_episode(10_000, 0.1, 7);
        assert_eq!(a, sparse_episode(10_000, 0.1, 7));
        let nonzero = a.iter().filter(|r| **r != 0.0).count();
        assert!((800..1200).contains(&nonzero));
    }
}
