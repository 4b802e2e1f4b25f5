//! Counter-based seed derivation.
//!
//! A [`SeedStream`] is a 64-bit key. Children are derived by mixing the
//! parent key with a counter through the SplitMix64 finaliser, so the
//! stream for `(repetition, b, stratum)` is the same no matter which
//! worker computes it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: mix(master_seed.wrapping_add(GOLDEN)),
        }
    }

    /// Child stream number `index`.
    pub fn child(&self, index: u64) -> Self {
        let z = self
            .key
            .wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1)));
        Self {
            key: mix(mix(z) ^ self.key.rotate_left(17)),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
