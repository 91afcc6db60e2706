//! Seeded randomness shared by every reproducible procedure in the crate.
//!
//! Splits and label-noise injection must be reproducible by other
//! implementations, so the exact procedure is fixed here:
//!
//! * generator: xoshiro256++ whose state is filled from the `u64` seed by
//!   SplitMix64 (the `seed_from_u64` of `rand_xoshiro`);
//! * bounded draw in `0..m`: `(next_u64() as u128 * m) >> 64`;
//! * shuffle: Fisher-Yates running `i` from `n-1` down to `1`, swapping
//!   `i` with a bounded draw in `0..=i`.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Name recorded next to seeds in emitted artifacts.
pub const GENERATOR: &str = "xoshiro256++ (splitmix64 seeding)";

pub type Generator = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Generator {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform draw in `0..bound` by the multiply-high mapping. `bound` must be nonzero.
pub fn bounded<R: RngCore + ?Sized>(rng: &mut R, bound: usize) -> usize {
    debug_assert!(bound > 0);
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Fisher-Yates permutation of `0..n`.
pub fn shuffled_indices<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = bounded(rng, i + 1);
        idx.swap(i, j);
    }
    idx
}

/// `round(x)` with halves rounded up, for non-negative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}
