//! Seed derivation. Every random stream in the crate is a ChaCha substream
//! derived from a master seed and a purpose tag, so runs are reproducible
//! and independent of the order in which streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

// Purpose tags.
pub const TAG_INIT: u64 = 1;
pub const TAG_DATA_ORDER: u64 = 2;
pub const TAG_TRAIN_NOISE: u64 = 3;
pub const TAG_DISC: u64 = 4;
pub const TAG_VALIDATION: u64 = 5;
pub const TAG_DISC_INIT: u64 = 6;
