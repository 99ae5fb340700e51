//! Content hashing shared by observations, stores and reports.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical JSON encoding of `value`.
///
/// Callers must only pass types whose serialization is order-stable
/// (structs, `Vec`, `BTreeMap`); hash maps would make this nondeterministic.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes to JSON");
    sha256_hex(&bytes)
}

/// Short form used in human-facing output and ids.
pub fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}
