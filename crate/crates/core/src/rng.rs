//! Per-replica random streams.
//!
//! Every replica draws from a ChaCha8 stream keyed by the master seed and a
//! purpose tag, with the replica index selecting the ChaCha stream id. The
//! 256-bit key is `seed.to_le_bytes() ++ purpose.to_le_bytes() ++ 0…`, so a
//! replica can be replayed from `(seed, purpose, index)` alone, whatever the
//! worker that ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicaRng = ChaCha8Rng;

/// Purpose tags keep independent experiment sides on disjoint keys.
pub mod purpose {
    pub const TREE: u32 = 1;
    pub const BRANCHING: u32 = 2;
    pub const GERM: u32 = 3;
    pub const YULE: u32 = 4;
    pub const ANCESTRAL_PATH: u32 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: u32, replica: u64) -> ReplicaRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..12].copy_from_slice(&purpose.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replica);
        rng
    }
}
