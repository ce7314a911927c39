//! Canonical serialization and content hashing.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Compact JSON with object keys sorted.
///
/// `serde_json::Value` keeps objects in a `BTreeMap`, so going through a
/// `Value` fixes key order regardless of struct field order.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("value serializes to JSON");
    serde_json::to_vec(&value).expect("JSON value serializes")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the canonical JSON form of `value`.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&canonical_json(value))
}
