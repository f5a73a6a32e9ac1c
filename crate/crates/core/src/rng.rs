//! Seed derivation shared by every stochastic component.
//!
//! Child seeds are derived by hashing the parent seed together with a label
//! and an index, so results depend only on *which* job is running and never
//! on the order in which jobs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Deterministic generator for a plain seed.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a child seed from `(base, label, index)`.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// Generator for `(base, label, index)`.
pub fn derived(base: u64, label: &str, index: u64) -> Rng {
    seeded(derive_seed(base, label, index))
}
