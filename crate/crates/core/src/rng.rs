//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(seed, domain, stream id)`. Work items pick their stream from their own
//! coordinates, so results never depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the stream families that share one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Generate = 0x6765_6e65,
    Path = 0x7061_7468,
    Segmentation = 0x7762_7321,
}

#[derive(Debug, Clone)]
pub struct StreamFamily {
    base: ChaCha8Rng,
}

impl StreamFamily {
    pub fn new(seed: u64, domain: Domain) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain as u64))),
        }
    }

    /// A fresh generator positioned at the start of stream `id`.
    pub fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(id);
        rng.set_word_pos(0);
        rng
    }
}

const LEVEL_BITS: u32 = 20;
const SUBSAMPLE_BITS: u32 = 20;
const REPLICATE_BITS: u32 = 24;

/// Upper bounds (exclusive) on the coordinates accepted by [`path_stream_id`].
pub const MAX_LEVELS: usize = 1 << LEVEL_BITS;
pub const MAX_SUBSAMPLES: usize = 1 << SUBSAMPLE_BITS;
pub const MAX_REPLICATES: usize = (1 << REPLICATE_BITS) - 1;

/// Injective packing of `(level, subsample, replicate)` into a stream id.
/// Replicate 0 is the observed subsample; `1..=L` are the null replicates.
pub fn path_stream_id(level: usize, subsample: usize, replicate: usize) -> u64 {
    debug_assert!(level < MAX_LEVELS);
    debug_assert!(subsample < MAX_SUBSAMPLES);
    debug_assert!(replicate <= MAX_REPLICATES);
    ((level as u64) << (SUBSAMPLE_BITS + REPLICATE_BITS))
        | ((subsample as u64) << REPLICATE_BITS)
        | replicate as u64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
