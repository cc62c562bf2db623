//! Content digests and canonical JSON encoding shared by every persisted artifact.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content-addressed token for an asset payload.
pub fn content_id(bytes: &[u8]) -> String {
    format!("sha256-{}", &sha256_hex(bytes)[..16])
}

/// Pretty-printed JSON with a trailing newline. Field order follows struct
/// declaration order and maps are `BTreeMap`s, so equal values give equal bytes.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory values always serialize");
    out.push(b'\n');
    out
}
