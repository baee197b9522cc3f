//! Deterministic seed derivation. Every random stream in the crate is a
//! `ChaCha8Rng` seeded from a master seed through [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `tag` of `parent`. Distinct tags give unrelated streams.
#[inline]
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    mix(mix(parent) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
