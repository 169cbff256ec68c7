//! Seed derivation.
//!
//! Every random stream in the pipeline is derived from one global seed and a
//! stable task index, so results do not depend on scheduling or pool size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed, a domain tag and an index.
pub fn derive(seed: u64, domain: &str, index: u64) -> u64 {
    let mut h = mix(seed);
    for b in domain.bytes() {
        h = mix(h ^ b as u64);
    }
    mix(h ^ index)
}

pub fn rng(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, domain, index))
}
