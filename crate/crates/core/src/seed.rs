//! Deterministic seed derivation.
//!
//! Experiments carry a single master seed. Child seeds for rollouts,
//! test states or instances are derived by mixing the parent with a stream
//! index, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of child `stream` from `parent`.
pub fn derive(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Generator seeded from `seed`.
pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for child `stream` of `parent`.
pub fn child_rng(parent: u64, stream: u64) -> Rng {
    rng(derive(parent, stream))
}
