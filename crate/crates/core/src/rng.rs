//! Deterministic rng streams derived from a master seed and a purpose tag.
//!
//! Every source of randomness in the crate (init, curriculum, instance
//! content, position sampling, evaluation) draws from its own stream so that
//! runs are reproducible and streams are decoupled from each other.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive an independent rng stream from `seed` and a purpose `tag`.
pub fn stream(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag))
}

/// Like [`stream`] but additionally keyed by an index (eval length, step, ...).
pub fn stream_indexed(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn mix(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag bytes, folded into the seed.
    let mut h = 0xCBF2_9CE4_8422_2325u64 ^ seed.wrapping_mul(0x100_0000_01B3);
    for &b in tag.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01B3);
    }
    h
}
