//! Content hash keying the node-side image cache.

use alloc::string::String;

use sha2::{Digest, Sha256};

/// SHA-256 over the length-prefixed source followed by the length-prefixed
/// requirements, hex encoded. Length prefixes keep `("ab","c")` and
/// `("a","bc")` apart.
pub fn package_digest(source: &[u8], requirements: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update((source.len() as u64).to_be_bytes());
    h.update(source);
    h.update((requirements.len() as u64).to_be_bytes());
    h.update(requirements);
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_separates_fields() {
        assert_ne!(package_digest(b"ab", b"c"), package_digest(b"a", b"bc"));
        assert_eq!(package_digest(b"x", b""), package_digest(b"x", b""));
        assert_eq!(package_digest(b"x", b"").len(), 64);
    }
}
