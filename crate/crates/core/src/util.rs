//! Small shared helpers: seed derivation and stable hashing.

use sha2::{Digest, Sha256};

/// Derives a component-specific RNG seed from a global seed.
///
/// Every stochastic stage of the pipeline takes its seed from the global
/// experiment seed through this function, so reruns with the same global
/// seed reproduce every stage while different components still see
/// decorrelated streams.
pub fn derive_seed(global: u64, component: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(component.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
