//! Seeded randomness shared by every stochastic component.
//!
//! All streams come from `ChaCha8Rng::seed_from_u64`, whose output is
//! value-stable across platforms and crate releases. Shuffling is a plain
//! Fisher–Yates pass drawing `next_u64() % (i + 1)` for `i = n-1 ..= 1`, so a
//! given `(n, seed)` always produces the same permutation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a stream id.
pub fn derived(seed: u64, stream: u64) -> Rng {
    seeded(seed.wrapping_add(stream))
}

pub fn shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, &mut seeded(seed));
    idx
}

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform(rng: &mut Rng, low: f64, high: f64) -> f64 {
    low + (high - low) * unit_f64(rng)
}

pub fn below(rng: &mut Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}
