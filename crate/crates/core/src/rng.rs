//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a 64-bit seed derived from one master seed, so results do not
//! depend on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `master`: the `index + 1`-th output
/// of a SplitMix64 generator started at `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(master, index))
}
