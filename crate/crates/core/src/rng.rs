//! Seeded, platform-independent randomness.
//!
//! Every random decision in the toolkit draws from a xoshiro256** stream
//! seeded through SplitMix64 (`Xoshiro256StarStar::seed_from_u64`). The
//! 64-bit stream key is
//!
//! ```text
//! key = seed ^ (purpose * 0xD1B54A32D192ED03) ^ ((repetition + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! with wrapping multiplication. Bounded integers in `[0, n)` are
//! `(next_u64() as u128 * n) >> 64`, and shuffles are descending
//! Fisher–Yates: for `i` from `len - 1` down to `1`, swap `i` with
//! `bounded(i + 1)`. These three rules are enough to reproduce any split
//! in another language.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

/// Distinct purposes get independent streams under the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Split = 1,
    Balance = 2,
    Synthetic = 3,
}

pub struct SeededRng(Xoshiro256StarStar);

impl SeededRng {
    pub fn new(seed: u64, purpose: Purpose, repetition: u64) -> Self {
        let key = seed
            ^ (purpose as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
            ^ repetition.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        SeededRng(Xoshiro256StarStar::seed_from_u64(key))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn bounded(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform float in `[0, 1)` from the top 53 bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate (Box–Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.unit_f64();
        let u2 = self.unit_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.bounded(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_independent() {
        let a: Vec<u64> = {
            let mut r = SeededRng::new(7, Purpose::Split, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SeededRng::new(7, Purpose::Split, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = SeededRng::new(7, Purpose::Split, 1);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let d: Vec<u64> = {
            let mut r = SeededRng::new(7, Purpose::Balance, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn bounded_stays_in_range() {
        let mut r = SeededRng::new(1, Purpose::Synthetic, 0);
        for n in 1..50 {
            for _ in 0..20 {
                assert!(r.bounded(n) < n);
            }
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut r = SeededRng::new(3, Purpose::Split, 2);
        let mut v: Vec<u32> = (0..100).collect();
        r.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
