//! Content hashing helpers shared across the workspace.
//!
//! Everything downstream (log chain digests, replay surface hashes, audit
//! rolling digests) goes through these two functions so the encoding is
//! defined in exactly one place: SHA-256 over UTF-8 bytes, lowercase hex.

use sha2::{Digest, Sha256};

/// SHA-256 of a UTF-8 string, rendered as 64 lowercase hex characters.
pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex::encode(hasher.finalize())
}

/// SHA-256 over raw bytes, rendered as lowercase hex.
pub fn sha256_hex_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Digest of the empty string; the chain digest of a log with no events.
pub const EMPTY_SHA256: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
