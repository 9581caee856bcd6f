//! Seeded randomness for simulations and export splits.
//!
//! Every random draw in this crate comes from [`SimRng`], ChaCha with 8
//! rounds as implemented by `rand_chacha` 0.9, seeded through
//! `SeedableRng::seed_from_u64`. Independent streams (one per annotator, per
//! task, ...) are derived from a base seed with the SplitMix64 finalizer, so
//! results never depend on iteration order or thread scheduling.
//!
//! Changing the generator or the derivation changes every simulated
//! number; bump [`GENERATOR`] when that happens.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Name and version of the generator, recorded in simulation reports.
pub const GENERATOR: &str = "chacha8-rand_chacha-0.9/splitmix64-v1";

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `stream` under `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// Seed of a sub-stream named by a string (FNV-1a of its bytes).
pub fn derive_str(seed: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive(seed, h)
}
