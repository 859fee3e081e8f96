//! Deterministic seed derivation.
//!
//! Per-node random streams are keyed by `(master seed, stream tag, node)` so
//! results do not depend on the order nodes are processed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

pub fn rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

/// Stream tags, so two consumers of the same master seed never share a stream.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const FEATURES: u64 = 2;
    pub const WALK: u64 = 3;
    pub const SAMPLE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const NEGATIVES: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const VALIDATION: u64 = 9;
    pub const SYNTH: u64 = 10;
    pub const BENCH: u64 = 11;
}
