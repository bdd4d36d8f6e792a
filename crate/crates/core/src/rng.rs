//! Seed derivation and the deterministic RNG used throughout the crate.
//!
//! Every randomized routine takes an explicit `u64` seed and builds its own
//! ChaCha stream from it, so results are reproducible across runs and
//! platforms. Independent streams for sub-tasks (one Gibbs chain per topic
//! model, one inference chain per document, ...) are derived with a
//! splitmix64 mix of the parent seed and a salt.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from `seed` and `salt`.
///
/// splitmix64 finalizer; distinct salts give uncorrelated streams.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
