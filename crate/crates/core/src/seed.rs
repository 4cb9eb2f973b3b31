//! Seed derivation. One top-level seed drives the whole pipeline; every stage
//! and every per-item RNG stream gets its own sub-seed derived by hashing, so
//! results are independent of execution order and worker scheduling.

use sha2::{Digest, Sha256};

/// Derive a sub-seed from a base seed and a textual label (stage name,
/// entity id, ...). Stable across platforms and runs.
pub fn derive(base: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Derive a sub-seed additionally keyed by an index (rounding trial, batch
/// number, ...).
pub fn derive_indexed(base: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(label.as_bytes());
    hasher.update([0x1f]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
