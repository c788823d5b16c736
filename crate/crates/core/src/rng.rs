//! Seed derivation for independent, reproducible streams.
//!
//! Every stream seed is `mix(root ^ mix(tag) ^ mix(index))` style counter
//! mixing with a SplitMix64 finalizer. Different tags give disjoint stream
//! families from one root seed, so a path, its exponential threshold and any
//! nested redraws never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream family for the Lévy path of scenario `i`.
pub const TAG_PATH: u64 = 0x5041_5448;
/// Stream family for the unit exponential threshold of scenario `i`.
pub const TAG_THETA: u64 = 0x5448_4554;
/// Stream family for nested threshold redraws in cross-checks.
pub const TAG_NESTED: u64 = 0x4e45_5354;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `index` in family `tag` under `root`.
pub fn stream_seed(root: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(tag)) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Seed of a sub-stream of an already derived stream.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    stream_seed(seed, TAG_NESTED, index)
}

pub fn generator(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
