//! Seeded, platform-independent index shuffling.
//!
//! All randomness in the toolkit flows through xoshiro256** seeded from a
//! 64-bit value via SplitMix64, so that a given seed produces the same
//! permutation everywhere. Bounded draws use the multiply-high reduction
//! `(x * n) >> 64` on the full 64-bit output.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type SeededRng = Xoshiro256StarStar;

pub fn seeded_rng(seed: u64) -> SeededRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Uniform draw in `0..bound`. `bound` must be non-zero.
pub fn below(rng: &mut SeededRng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize
}

/// Fisher-Yates shuffle of `0..n`, walking from the last index down.
pub fn shuffled_indices(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = below(rng, i + 1);
        idx.swap(i, j);
    }
    idx
}

/// Picks `k` of `0..n` uniformly without replacement, returned in ascending
/// order.
pub fn sample_sorted(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut picked = shuffled_indices(n, rng);
    picked.truncate(k.min(n));
    picked.sort_unstable();
    picked
}
