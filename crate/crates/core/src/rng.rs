//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a master
//! seed through [`derive_seed`]: `derive_seed(parent, index)` mixes the pair
//! with two SplitMix64 finalizer rounds. Streams are addressed by a path of
//! indices (for instance `[strategy, gap, chain]`), so a stream's contents do
//! not depend on the order in which other streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |s, &i| derive_seed(s, i))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, path: &[u64]) -> Rng {
    rng_from_seed(derive_path(master, path))
}

/// Stable stream labels, so call sites do not collide.
pub mod label {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const GAPS: u64 = 3;
    pub const CHAINS: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const FILL: u64 = 6;
}
