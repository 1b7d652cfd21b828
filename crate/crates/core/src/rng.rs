//! Seed derivation and independent random streams.
//!
//! Every simulator owns three ChaCha8 streams (catalog, users, clicks) that
//! share a seed but use distinct ChaCha stream ids, so re-seeding users or
//! clicks never perturbs the catalog. Harness-level seeds (validation
//! checkpoints, policy noise) are derived with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Catalog,
    Users,
    Clicks,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Catalog => 0,
            Stream::Users => 1,
            Stream::Clicks => 2,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Plain RNG for callers that need one stream (policies, tests).
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `(master, label, index)` into a fresh seed.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label, then mixed with the other two words.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(splitmix64(master ^ h).wrapping_add(index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible() {
        let (mut r1, mut r2) = (stream_rng(7, Stream::Users), stream_rng(7, Stream::Users));
        let a: Vec<u64> = (0..8).map(|_| r1.gen()).collect();
        let b: Vec<u64> = (0..8).map(|_| r2.gen()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let x: u64 = stream_rng(7, Stream::Users).gen();
        let y: u64 = stream_rng(7, Stream::Clicks).gen();
        let z: u64 = stream_rng(7, Stream::Catalog).gen();
        assert_ne!(x, y);
        assert_ne!(y, z);
    }

    #[test]
    fn derived_seeds_separate_labels_and_indices() {
        let base = derive_seed(3, "validation", 0);
        assert_eq!(base, derive_seed(3, "validation", 0));
        assert_ne!(base, derive_seed(3, "validation", 1));
        assert_ne!(base, derive_seed(3, "training", 0));
        assert_ne!(base, derive_seed(4, "validation", 0));
    }
}
