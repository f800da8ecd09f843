//! Seeded random streams for initial data and perturbed meshes.
//!
//! The generator is SplitMix64 and the float mapping is fixed, so a seed
//! produces the same numbers in any implementation:
//! `unit = (next_u64 >> 11) * 2^-53` in `[0, 1)`, `symmetric = 2 * unit - 1`.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SeededStream {
    inner: SplitMix64,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    /// Uniform draw in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_reference_splitmix64_sequence() {
        // Published reference outputs for seed 1234567.
        let mut s = SeededStream::new(1234567);
        assert_eq!(s.next_u64(), 6457827717110365317);
        assert_eq!(s.next_u64(), 3203168211198807973);
        assert_eq!(s.next_u64(), 9817491932198370423);
    }

    #[test]
    fn symmetric_draws_stay_in_range() {
        let mut s = SeededStream::new(7);
        for _ in 0..10_000 {
            let v = s.next_symmetric();
            assert!((-1.0..1.0).contains(&v));
        }
    }
}
