//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a user seed plus a fixed per-component offset, so results are
//! reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-component offsets added to the global seed.
pub mod offset {
    pub const SPLIT: u64 = 0x1000;
    pub const SUBSAMPLE: u64 = 0x2000;
    pub const INIT: u64 = 0x3000;
    pub const SHUFFLE: u64 = 0x4000;
    pub const VI_SAMPLES: u64 = 0x5000;
    pub const VI_EVAL: u64 = 0x6000;
    pub const SYNTH: u64 = 0x7000;
    pub const POOL: u64 = 0x8000;
    pub const POLICY: u64 = 0x9000;
    pub const PREDICT: u64 = 0xA000;
}

/// SplitMix64 finalizer; used to mix a seed with a counter.
pub fn mix(seed: u64, counter: u64) -> u64 {
    let mut z = seed
        .wrapping_add(counter.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64, component: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(component))
}

/// Independent stream `stream` of the generator for `(seed, component)`.
pub fn stream(seed: u64, component: u64, stream: u64) -> ChaCha8Rng {
    let mut r = rng(seed, component);
    r.set_stream(stream);
    r
}
