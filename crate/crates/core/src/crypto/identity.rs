use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_IDENTITY_LEN: usize = 64;

/// A canonical user identifier, typically a phone number such as `+31612345678`.
///
/// Canonical form strips surrounding whitespace. Ordering is byte-lexicographic
/// on the canonical UTF-8 encoding.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Identity(String);

impl Identity {
    pub fn new(raw: &str) -> Result<Self> {
        let value = raw.trim();
        if value.is_empty() {
            return Err(Error::InvalidIdentity("empty".into()));
        }
        if value.len() > MAX_IDENTITY_LEN {
            return Err(Error::InvalidIdentity(format!("{} bytes exceeds {MAX_IDENTITY_LEN}", value.len())));
        }
        if value.chars().any(char::is_control) {
            return Err(Error::InvalidIdentity("contains control characters".into()));
        }
        Ok(Identity(value.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }

    /// 4-byte big-endian length followed by the UTF-8 bytes.
    pub fn hash_encoding(&self) -> Vec<u8> {
        let bytes = self.as_bytes();
        let mut out = Vec::with_capacity(4 + bytes.len());
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(bytes);
        out
    }
}

impl FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Identity::new(s)
    }
}

impl TryFrom<String> for Identity {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Identity::new(&value)
    }
}

impl From<Identity> for String {
    fn from(id: Identity) -> String {
        id.0
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Identity({})", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalization_is_idempotent() {
        let once = Identity::new("  +31600000001 \n").unwrap();
        let twice = Identity::new(once.as_str()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once.as_str(), "+31600000001");
    }

    #[test]
    fn rejects_bad_identities() {
        assert!(Identity::new("   ").is_err());
        assert!(Identity::new(&"9".repeat(65)).is_err());
        assert!(Identity::new("ab\u{0}c").is_err());
        assert!(Identity::new(&"9".repeat(64)).is_ok());
    }

    #[test]
    fn hash_encoding_is_length_prefixed() {
        let id = Identity::new("alice").unwrap();
        assert_eq!(id.hash_encoding(), b"\x00\x00\x00\x05alice".to_vec());
    }

    #[test]
    fn serde_validates() {
        let id: Identity = serde_json::from_str("\" bob \"").unwrap();
        assert_eq!(id.as_str(), "bob");
        assert!(serde_json::from_str::<Identity>("\"\"").is_err());
    }
}
