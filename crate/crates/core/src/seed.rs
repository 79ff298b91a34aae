//! Seed derivation for reproducible, parallel random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose 64-bit seed
//! is obtained by hashing `(master, stream label, index)` with the SplitMix64
//! finalizer. The finalizer is a bijection on `u64`, so derived replica seeds are
//! pairwise distinct for distinct indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named random streams. Each label gets an independent family of generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Design,
    Noise,
    MonteCarlo,
    Replica,
    Width,
    Support,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Design => 0x6465_7369_676e,
            Stream::Noise => 0x006e_6f69_7365,
            Stream::MonteCarlo => 0x6d6f_6e74_6563,
            Stream::Replica => 0x7265_706c_6963,
            Stream::Width => 0x0077_6964_7468,
            Stream::Support => 0x7375_7070_6f72,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Seed word for `(label, index)` under this master seed.
    pub fn stream_seed(&self, label: Stream, index: u64) -> u64 {
        let a = splitmix64(self.master_seed ^ splitmix64(label.tag()));
        splitmix64(a.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
    }

    pub fn rng(&self, label: Stream, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.stream_seed(label, index))
    }

    /// Seed for replica `idx`. Injective in `idx` for a fixed master seed.
    pub fn derive_replica(&self, idx: u64) -> SeedSpec {
        SeedSpec {
            master_seed: self.stream_seed(Stream::Replica, idx),
        }
    }
}

pub fn derive_replica_seed(seed: SeedSpec, replica_idx: u64) -> SeedSpec {
    seed.derive_replica(replica_idx)
}
