//! Seed derivation. Every randomized component owns its own stream, derived
//! from the master seed and a tag path, so adding a consumer never perturbs
//! the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(master), |acc, &t| mix(acc ^ mix(t)))
}

pub fn stream(master: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, tags))
}

/// Tags that namespace the streams of the different consumers.
pub mod tag {
    pub const LINK_CORRUPTION: u64 = 1;
    pub const MALEVOLENT: u64 = 2;
    pub const LATENCY: u64 = 3;
    pub const COMPUTE: u64 = 4;
    pub const TRIAL: u64 = 5;
}
