//! Random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`) seeded
//! through `SeedableRng::seed_from_u64`, with independent purposes separated
//! by ChaCha stream id. Gaussian variates use the Ziggurat sampler of
//! `rand_distr::StandardNormal`. Both algorithms are fixed and
//! platform-independent, so a `(seed, stream)` pair names a reproducible
//! sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Stream ids.
pub mod streams {
    pub const INSTANCE: u64 = 0;
    pub const SYNC_COINS: u64 = 1;
    pub const QUERY_NOISE: u64 = 2;
    pub const SAMPLING: u64 = 3;
}

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Folds labelled components into a 64-bit seed (first 8 bytes of SHA-256,
/// little endian). Each component is length-prefixed so that adjacent
/// components cannot alias.
pub fn derive_seed(components: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for c in components {
        hasher.update((c.len() as u64).to_le_bytes());
        hasher.update(c);
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}
