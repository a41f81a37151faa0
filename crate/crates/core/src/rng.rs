//! Seeding conventions shared by simulators, calibration and replication.
//!
//! Every random stream is a ChaCha20 generator (`rand_chacha::ChaCha20Rng`)
//! seeded through `seed_from_u64`. Derived seeds are the first eight bytes,
//! read little-endian, of `SHA-256("{master}/{stream}/{index}")`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

pub fn stream(seed: u64) -> StreamRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Seed of replicate `index` in the named stream.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    let digest = Sha256::digest(format!("{master}/{stream}/{index}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// `±1` from the lowest bit of one 32-bit draw.
#[inline]
pub fn rademacher<R: RngCore>(rng: &mut R) -> f64 {
    if rng.next_u32() & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
