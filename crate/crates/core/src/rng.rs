//! Deterministic seed derivation.
//!
//! Every random stream in the crate is addressed by a path of integers below
//! a master seed (for example `master / rep / purpose / replicate`). Each path
//! maps to its own ChaCha8 key, so a stream's output depends only on its
//! address and never on the order in which streams are consumed. This is
//! what lets replicates and Monte Carlo reps run on any number of threads
//! with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Purpose tags used as the first path component below a master seed.
pub mod purpose {
    pub const POPULATION: u64 = 1;
    pub const SAMPLE_A: u64 = 2;
    pub const SAMPLE_B: u64 = 3;
    pub const REPLICATE_WEIGHTS: u64 = 4;
    pub const REPLICATE_REFIT: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
    pub const REP: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed derivation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    state: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self {
            state: splitmix64(master),
        }
    }

    pub fn child(self, index: u64) -> Self {
        Self {
            state: splitmix64(self.state ^ splitmix64(index.wrapping_add(0xA5A5_5A5A_0F0F_F0F0))),
        }
    }

    /// The node's state, usable as a master seed for an API taking `u64`.
    pub fn seed(self) -> u64 {
        self.state
    }

    pub fn rng(self) -> StreamRng {
        let mut key = [0u8; 32];
        let mut s = self.state;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
