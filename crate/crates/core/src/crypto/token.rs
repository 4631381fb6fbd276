//! Augmented tokens: the only protocol values the matching server ever sees.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::suite::{SourcePoint, TargetElement};
use crate::error::{Error, Result};

pub const H2_DOMAIN_TAG: &[u8] = b"MCD-H2-v1";
/// Output length of `H2` in bits.
pub const TOKEN_BITS: u32 = 256;
pub const TOKEN_BYTES: usize = TOKEN_BITS as usize / 8;
pub const TOKEN_HEX_LEN: usize = TOKEN_BYTES * 2;

/// An n-bit hash output, written as 64 lowercase hex characters on the wire.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AugmentedToken([u8; TOKEN_BYTES]);

impl AugmentedToken {
    pub fn from_bytes(bytes: [u8; TOKEN_BYTES]) -> Self {
        AugmentedToken(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TOKEN_BYTES] {
        &self.0
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; TOKEN_BYTES];
        rng.fill_bytes(&mut bytes);
        AugmentedToken(bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// True iff `s` is exactly 64 lowercase hex characters.
pub fn is_hex64(s: &str) -> bool {
    s.len() == TOKEN_HEX_LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

impl FromStr for AugmentedToken {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if !is_hex64(s) {
            return Err(Error::Malformed("token must be 64 lowercase hex characters".into()));
        }
        let mut bytes = [0u8; TOKEN_BYTES];
        hex::decode_to_slice(s, &mut bytes).map_err(|e| Error::Malformed(e.to_string()))?;
        Ok(AugmentedToken(bytes))
    }
}

impl TryFrom<String> for AugmentedToken {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AugmentedToken> for String {
    fn from(t: AugmentedToken) -> String {
        t.to_hex()
    }
}

impl fmt::Display for AugmentedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for AugmentedToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AugmentedToken({}..)", &self.to_hex()[..12])
    }
}

/// `(first, second)` as submitted to and returned by the matching server.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TuplePair {
    pub first: AugmentedToken,
    pub second: AugmentedToken,
}

impl TuplePair {
    pub fn new(first: AugmentedToken, second: AugmentedToken) -> Self {
        TuplePair { first, second }
    }
}

impl Serialize for TuplePair {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (self.first, self.second).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TuplePair {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (first, second) = <(AugmentedToken, AugmentedToken)>::deserialize(deserializer)?;
        Ok(TuplePair { first, second })
    }
}

/// Raw `H2(t, first, second)`.
pub fn h2(t: &TargetElement, first: &SourcePoint, second: &SourcePoint) -> AugmentedToken {
    let digest = Sha256::new()
        .chain_update(H2_DOMAIN_TAG)
        .chain_update(t.encoding())
        .chain_update(first.encode())
        .chain_update(second.encode())
        .finalize();
    AugmentedToken(digest.into())
}

/// `H2` made symmetric in its point arguments: the points are fed in
/// ascending order of their canonical encodings.
pub fn ordered_h2(t: &TargetElement, y: &SourcePoint, z: &SourcePoint) -> AugmentedToken {
    debug_assert_eq!(y.slot(), super::suite::Slot::Slot1);
    debug_assert_eq!(z.slot(), super::suite::Slot::Slot1);
    if y.encode() < z.encode() {
        h2(t, y, z)
    } else {
        h2(t, z, y)
    }
}
