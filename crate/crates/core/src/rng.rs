//! Keyed random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream whose 256-bit seed is
//! `SHA-256(domain | seed | key | index)`. A stream depends only on its key,
//! never on how many draws other streams made, so results do not change with
//! iteration order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator identification embedded in reports.
pub const GENERATOR: &str =
    "ChaCha8Rng (rand_chacha 0.9), seeded by SHA-256(domain|seed|key|index)";

pub fn stream(domain: &str, seed: u64, key: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"auditkit/v1\0");
    hasher.update(domain.as_bytes());
    hasher.update([0]);
    hasher.update(seed.to_le_bytes());
    hasher.update((key.len() as u64).to_le_bytes());
    hasher.update(key.as_bytes());
    hasher.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
