//! Named random-stream derivation.
//!
//! Every run owns one root seed; each consumer derives its own stream as
//! `root ^ fnv1a(name)` so adding a new consumer never perturbs the draws of
//! an existing one.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the stream name. Stable across platforms.
pub fn fnv1a64(name: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derive the seed of a named stream from the root seed.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    root ^ fnv1a64(name)
}

/// Deterministic RNG for a named stream.
pub fn stream_rng(root: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, name))
}

/// Deterministic RNG straight from a seed.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
