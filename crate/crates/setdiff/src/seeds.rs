//! Deterministic seed derivation.
//!
//! Everything random in this crate flows from one root seed through labeled
//! SHA-256 mixes, so adding a round/trial never reshuffles earlier ones and
//! results are stable across platforms and runs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `(root, label, parts...)`.
pub fn mix(root: u64, label: &str, parts: &[u64]) -> u64 {
    let bytes = digest(root, label, parts);
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}

/// Seeded RNG for `(root, label, parts...)`. ChaCha output is specified by
/// the cipher, so streams are identical on every platform.
pub fn rng(root: u64, label: &str, parts: &[u64]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(digest(root, label, parts))
}

fn digest(root: u64, label: &str, parts: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update([label.len() as u8]);
    h.update(label.as_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    h.finalize().into()
}

/// Seeded RNG keyed by a string (used for text- and image-keyed noise).
pub fn rng_keyed(root: u64, label: &str, key: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update([label.len() as u8]);
    h.update(label.as_bytes());
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}
