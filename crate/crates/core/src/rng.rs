//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`Rng`], a xoshiro256** generator
//! whose state is expanded from a `u64` seed with splitmix64. Independent streams
//! for parallel work are derived from a master seed and a stream index, so the
//! content of stream `i` never depends on scheduling order.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type Rng = Xoshiro256StarStar;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// One splitmix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th independent stream under `master`.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub fn stream(master: u64, index: u64) -> Rng {
    seeded(stream_seed(master, index))
}

/// Named substreams used by the experiment harness.
pub fn labeled_seed(master: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(splitmix64(master), |acc, b| splitmix64(acc ^ u64::from(b)))
}
