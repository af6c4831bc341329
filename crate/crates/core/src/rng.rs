//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8, a counter-based stream
//! cipher generator whose output is fully specified and platform independent.
//! Distinct consumers of the same user seed are separated by stream id, so
//! adding a new consumer never perturbs the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used across the crate.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const CENTERS: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BATCHES: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const SUBSETS: u64 = 6;
    pub const EXPLICIT_INIT: u64 = 7;
}

/// Generator for `seed` on the given stream.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for item `index` (e.g. the m-th synthetic model) under `seed`.
/// The index is hashed into the seed, so items never share a sequence.
pub fn seeded_indexed(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ index;
    seeded(mixed, stream)
}
