//! Seeded randomness.
//!
//! The generator is xoshiro256** seeded by expanding the 64-bit seed with
//! SplitMix64, exactly as the reference implementation recommends. Uniform
//! doubles take the top 53 bits; every other distribution is derived from
//! them by inverse CDF, so a trace can be reproduced by any implementation
//! of the same two published generators.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::scenario::Dist;

#[derive(Debug, Clone)]
pub struct SimRng(Xoshiro256StarStar);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_f64() * n as f64) as u64).min(n - 1)
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * (1.0 - self.next_f64()).ln()
    }

    pub fn sample(&mut self, dist: &Dist) -> f64 {
        match *dist {
            Dist::Constant { value } => value,
            Dist::Uniform { low, high } => low + (high - low) * self.next_f64(),
            Dist::Exponential { mean } => self.exponential(mean),
        }
    }
}
