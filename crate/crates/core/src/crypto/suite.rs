//! Group suites: source groups, the pairing, and hashing identities into groups.
//!
//! Two suites exist. The production suite is the asymmetric BLS12-381 pairing
//! `e: G1 x G2 -> GT`. The transparent suite is an exponent-carrying toy
//! pairing whose discrete logs are visible to tests. Every identity is hashed
//! into both source slots; under the transparent suite both slots carry the
//! same exponent, which models a symmetric pairing.

use std::fmt;

use ark_bls12_381::{Bls12_381, Fq, Fq2, Fr, G1Affine, G2Affine};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{AffineRepr, CurveGroup};
use ark_ff::{BigInteger, One, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::identity::Identity;
use super::transparent::TransparentGroup;
use crate::error::{Error, Result};

/// Try-and-increment budget for hashing into a group.
pub const HASH_TO_GROUP_ATTEMPTS: usize = 256;

const H1_TAG_G1: &[u8] = b"MCD-H1-G1-v1";
const H1_TAG_G2: &[u8] = b"MCD-H1-G2-v1";
const H1_TAG_TRANSPARENT: &[u8] = b"MCD-H1-T-v1";

pub const G1_LEN: usize = 48;
pub const G2_LEN: usize = 96;
pub const GT_LEN: usize = 576;
pub const TRANSPARENT_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteId {
    ProductionPairing,
    TransparentTestPairing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Slot1,
    Slot2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupSuite {
    Production,
    Transparent(TransparentGroup),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PointRepr {
    Transparent { q: u64, slot: Slot, x: u64 },
    G1(G1Affine),
    G2(G2Affine),
}

/// An element of one of the two source groups.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SourcePoint(PointRepr);

/// A target-group element, held in its canonical encoding.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TargetElement {
    suite: SuiteId,
    bytes: Vec<u8>,
}

#[derive(Clone, PartialEq, Eq)]
enum ScalarRepr {
    Transparent { q: u64, v: u64 },
    Bls(Fr),
}

/// A nonzero exponent in `Z_q^*`.
#[derive(Clone, PartialEq, Eq)]
pub struct Scalar(ScalarRepr);

fn wide_hash(tag: &[u8], id: &Identity, counter: u8, lane: u8) -> [u8; 64] {
    let mut out = [0u8; 64];
    for (half, chunk) in out.chunks_mut(32).enumerate() {
        let digest = Sha256::new()
            .chain_update(tag)
            .chain_update(id.hash_encoding())
            .chain_update([counter, lane, half as u8])
            .finalize();
        chunk.copy_from_slice(&digest);
    }
    out
}

impl GroupSuite {
    pub fn id(&self) -> SuiteId {
        match self {
            GroupSuite::Production => SuiteId::ProductionPairing,
            GroupSuite::Transparent(_) => SuiteId::TransparentTestPairing,
        }
    }

    pub fn transparent(q: u64) -> Result<Self> {
        Ok(GroupSuite::Transparent(TransparentGroup::new(q)?))
    }

    /// Rebuilds a suite from its published id and big-endian order.
    pub fn from_published(id: SuiteId, order_be: &[u8]) -> Result<Self> {
        let suite = match id {
            SuiteId::ProductionPairing => GroupSuite::Production,
            SuiteId::TransparentTestPairing => {
                let trimmed: Vec<u8> = order_be.iter().copied().skip_while(|b| *b == 0).collect();
                if trimmed.len() > 8 {
                    return Err(Error::InvalidParams("transparent order exceeds 64 bits".into()));
                }
                let mut buf = [0u8; 8];
                buf[8 - trimmed.len()..].copy_from_slice(&trimmed);
                GroupSuite::transparent(u64::from_be_bytes(buf))?
            }
        };
        if suite.order_be() != order_be.iter().copied().skip_while(|b| *b == 0).collect::<Vec<_>>() {
            return Err(Error::InvalidParams("published order does not match suite".into()));
        }
        Ok(suite)
    }

    /// Group order, big-endian without leading zeros.
    pub fn order_be(&self) -> Vec<u8> {
        let bytes = match self {
            GroupSuite::Production => Fr::MODULUS.to_bytes_be(),
            GroupSuite::Transparent(g) => g.order().to_be_bytes().to_vec(),
        };
        bytes.into_iter().skip_while(|b| *b == 0).collect()
    }

    pub fn point_len(&self, slot: Slot) -> usize {
        match (self, slot) {
            (GroupSuite::Production, Slot::Slot1) => G1_LEN,
            (GroupSuite::Production, Slot::Slot2) => G2_LEN,
            (GroupSuite::Transparent(_), _) => TRANSPARENT_LEN,
        }
    }

    pub fn generator(&self, slot: Slot) -> SourcePoint {
        match (self, slot) {
            (GroupSuite::Production, Slot::Slot1) => SourcePoint(PointRepr::G1(G1Affine::generator())),
            (GroupSuite::Production, Slot::Slot2) => SourcePoint(PointRepr::G2(G2Affine::generator())),
            (GroupSuite::Transparent(g), slot) => SourcePoint(PointRepr::Transparent { q: g.order(), slot, x: 1 }),
        }
    }

    pub fn identity_element(&self, slot: Slot) -> SourcePoint {
        match (self, slot) {
            (GroupSuite::Production, Slot::Slot1) => SourcePoint(PointRepr::G1(G1Affine::zero())),
            (GroupSuite::Production, Slot::Slot2) => SourcePoint(PointRepr::G2(G2Affine::zero())),
            (GroupSuite::Transparent(g), slot) => SourcePoint(PointRepr::Transparent { q: g.order(), slot, x: 0 }),
        }
    }

    /// `H1` restricted to one slot. Never returns the identity element or the
    /// published generator of that slot.
    pub fn hash_to_slot(&self, id: &Identity, slot: Slot) -> Result<SourcePoint> {
        let point = self.hash_to_slot_inner(id, slot)?;
        debug_assert!(!point.is_identity() && point != self.generator(slot));
        Ok(point)
    }

    fn hash_to_slot_inner(&self, id: &Identity, slot: Slot) -> Result<SourcePoint> {
        for counter in 0..HASH_TO_GROUP_ATTEMPTS {
            let counter = counter as u8;
            let candidate = match (self, slot) {
                (GroupSuite::Transparent(g), slot) => {
                    let wide = wide_hash(H1_TAG_TRANSPARENT, id, counter, 0);
                    let x = g.reduce(u128::from_be_bytes(wide[..16].try_into().unwrap()));
                    Some(SourcePoint(PointRepr::Transparent { q: g.order(), slot, x }))
                }
                (GroupSuite::Production, Slot::Slot1) => {
                    let wide = wide_hash(H1_TAG_G1, id, counter, 0);
                    let x = Fq::from_be_bytes_mod_order(&wide);
                    G1Affine::get_point_from_x_unchecked(x, wide[63] & 1 == 1)
                        .map(|p| SourcePoint(PointRepr::G1(p.clear_cofactor())))
                }
                (GroupSuite::Production, Slot::Slot2) => {
                    let c0 = wide_hash(H1_TAG_G2, id, counter, 0);
                    let c1 = wide_hash(H1_TAG_G2, id, counter, 1);
                    let x = Fq2::new(Fq::from_be_bytes_mod_order(&c0), Fq::from_be_bytes_mod_order(&c1));
                    G2Affine::get_point_from_x_unchecked(x, c1[63] & 1 == 1)
                        .map(|p| SourcePoint(PointRepr::G2(p.clear_cofactor())))
                }
            };
            if let Some(point) = candidate {
                if !point.is_identity() && point != self.generator(slot) {
                    return Ok(point);
                }
            }
        }
        Err(Error::HashToGroupExhausted)
    }

    /// `(Q1(id), Q2(id))`.
    pub fn hash_to_points(&self, id: &Identity) -> Result<(SourcePoint, SourcePoint)> {
        Ok((self.hash_to_slot(id, Slot::Slot1)?, self.hash_to_slot(id, Slot::Slot2)?))
    }

    fn check_member(&self, point: &SourcePoint) -> Result<()> {
        match (self, point.0) {
            (GroupSuite::Production, PointRepr::G1(_) | PointRepr::G2(_)) => Ok(()),
            (GroupSuite::Transparent(g), PointRepr::Transparent { q, .. }) if g.order() == q => Ok(()),
            _ => Err(Error::SuiteMismatch),
        }
    }

    /// The pairing `e(a, b)` with `a` in slot 1 and `b` in slot 2.
    pub fn pair(&self, a: &SourcePoint, b: &SourcePoint) -> Result<TargetElement> {
        self.check_member(a)?;
        self.check_member(b)?;
        if a.slot() != Slot::Slot1 || b.slot() != Slot::Slot2 {
            return Err(Error::SlotMismatch);
        }
        match (self, a.0, b.0) {
            (GroupSuite::Production, PointRepr::G1(p), PointRepr::G2(q)) => {
                let out = Bls12_381::pairing(p, q);
                let mut bytes = Vec::with_capacity(GT_LEN);
                out.serialize_compressed(&mut bytes).expect("GT serialization");
                Ok(TargetElement { suite: SuiteId::ProductionPairing, bytes })
            }
            (GroupSuite::Transparent(g), PointRepr::Transparent { x: a, .. }, PointRepr::Transparent { x: b, .. }) => {
                Ok(TargetElement::transparent(g.mul(a, b)))
            }
            _ => Err(Error::SuiteMismatch),
        }
    }

    pub fn target_identity(&self) -> TargetElement {
        match self {
            GroupSuite::Production => {
                let mut bytes = Vec::with_capacity(GT_LEN);
                PairingOutput::<Bls12_381>::zero().serialize_compressed(&mut bytes).expect("GT serialization");
                TargetElement { suite: SuiteId::ProductionPairing, bytes }
            }
            GroupSuite::Transparent(_) => TargetElement::transparent(0),
        }
    }

    /// Scalar multiplication `k * point`.
    pub fn mul(&self, point: &SourcePoint, k: &Scalar) -> Result<SourcePoint> {
        self.check_member(point)?;
        match (point.0, &k.0) {
            (PointRepr::G1(p), ScalarRepr::Bls(s)) => Ok(SourcePoint(PointRepr::G1((p * *s).into_affine()))),
            (PointRepr::G2(p), ScalarRepr::Bls(s)) => Ok(SourcePoint(PointRepr::G2((p * *s).into_affine()))),
            (PointRepr::Transparent { q, slot, x }, ScalarRepr::Transparent { q: sq, v }) if q == *sq => {
                let g = TransparentGroup::new(q)?;
                Ok(SourcePoint(PointRepr::Transparent { q, slot, x: g.mul(x, *v) }))
            }
            _ => Err(Error::SuiteMismatch),
        }
    }

    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        loop {
            let s = match self {
                GroupSuite::Production => Scalar(ScalarRepr::Bls(Fr::rand(rng))),
                GroupSuite::Transparent(g) => {
                    let wide = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
                    Scalar(ScalarRepr::Transparent { q: g.order(), v: g.reduce(wide) })
                }
            };
            if !s.is_zero() {
                return s;
            }
        }
    }

    /// Maps 64 uniformly random bytes to a scalar; zero is mapped to one.
    pub fn scalar_from_wide(&self, wide: &[u8; 64]) -> Scalar {
        let s = match self {
            GroupSuite::Production => Scalar(ScalarRepr::Bls(Fr::from_be_bytes_mod_order(wide))),
            GroupSuite::Transparent(g) => Scalar(ScalarRepr::Transparent {
                q: g.order(),
                v: g.reduce(u128::from_be_bytes(wide[..16].try_into().unwrap())),
            }),
        };
        if s.is_zero() {
            self.scalar_from_u64(1).expect("one is a valid scalar")
        } else {
            s
        }
    }

    pub fn scalar_from_u64(&self, v: u64) -> Result<Scalar> {
        let s = match self {
            GroupSuite::Production => Scalar(ScalarRepr::Bls(Fr::from(v))),
            GroupSuite::Transparent(g) => Scalar(ScalarRepr::Transparent { q: g.order(), v: v % g.order() }),
        };
        if s.is_zero() {
            return Err(Error::InvalidParams("scalar must be nonzero".into()));
        }
        Ok(s)
    }

    pub fn decode_scalar(&self, bytes: &[u8; 32]) -> Result<Scalar> {
        let s = match self {
            GroupSuite::Production => {
                Scalar(ScalarRepr::Bls(Fr::deserialize_compressed(&bytes[..]).map_err(|_| Error::InvalidEncoding)?))
            }
            GroupSuite::Transparent(g) => {
                if bytes[..24].iter().any(|b| *b != 0) {
                    return Err(Error::InvalidEncoding);
                }
                let v = u64::from_be_bytes(bytes[24..].try_into().unwrap());
                if v >= g.order() {
                    return Err(Error::InvalidEncoding);
                }
                Scalar(ScalarRepr::Transparent { q: g.order(), v })
            }
        };
        if s.is_zero() {
            return Err(Error::InvalidEncoding);
        }
        Ok(s)
    }

    /// Decodes a canonical point encoding, rejecting off-curve, wrong-subgroup
    /// and non-canonical inputs.
    pub fn decode_point(&self, slot: Slot, bytes: &[u8]) -> Result<SourcePoint> {
        if bytes.len() != self.point_len(slot) {
            return Err(Error::InvalidEncoding);
        }
        let point = match (self, slot) {
            (GroupSuite::Production, Slot::Slot1) => {
                SourcePoint(PointRepr::G1(G1Affine::deserialize_compressed(bytes).map_err(|_| Error::InvalidEncoding)?))
            }
            (GroupSuite::Production, Slot::Slot2) => {
                SourcePoint(PointRepr::G2(G2Affine::deserialize_compressed(bytes).map_err(|_| Error::InvalidEncoding)?))
            }
            (GroupSuite::Transparent(g), slot) => {
                let x = u64::from_be_bytes(bytes.try_into().unwrap());
                if x >= g.order() {
                    return Err(Error::InvalidEncoding);
                }
                SourcePoint(PointRepr::Transparent { q: g.order(), slot, x })
            }
        };
        if point.encode() != bytes {
            return Err(Error::InvalidEncoding);
        }
        Ok(point)
    }

    pub fn decode_point_hex(&self, slot: Slot, s: &str) -> Result<SourcePoint> {
        let bytes = hex::decode(s).map_err(|_| Error::InvalidEncoding)?;
        self.decode_point(slot, &bytes)
    }

    pub fn decode_target(&self, bytes: &[u8]) -> Result<TargetElement> {
        match self {
            GroupSuite::Production => {
                if bytes.len() != GT_LEN {
                    return Err(Error::InvalidEncoding);
                }
                let el =
                    PairingOutput::<Bls12_381>::deserialize_compressed(bytes).map_err(|_| Error::InvalidEncoding)?;
                let mut canonical = Vec::with_capacity(GT_LEN);
                el.serialize_compressed(&mut canonical).expect("GT serialization");
                if canonical != bytes {
                    return Err(Error::InvalidEncoding);
                }
                Ok(TargetElement { suite: SuiteId::ProductionPairing, bytes: canonical })
            }
            GroupSuite::Transparent(g) => {
                let arr: [u8; 8] = bytes.try_into().map_err(|_| Error::InvalidEncoding)?;
                let x = u64::from_be_bytes(arr);
                if x >= g.order() {
                    return Err(Error::InvalidEncoding);
                }
                Ok(TargetElement::transparent(x))
            }
        }
    }

    /// Point with a chosen discrete log. Only meaningful for the transparent
    /// suite, where tests need to place exponents exactly.
    pub fn transparent_point(&self, slot: Slot, exponent: u64) -> Result<SourcePoint> {
        match self {
            GroupSuite::Transparent(g) => {
                Ok(SourcePoint(PointRepr::Transparent { q: g.order(), slot, x: exponent % g.order() }))
            }
            GroupSuite::Production => Err(Error::SuiteMismatch),
        }
    }
}

impl SourcePoint {
    pub fn slot(&self) -> Slot {
        match self.0 {
            PointRepr::Transparent { slot, .. } => slot,
            PointRepr::G1(_) => Slot::Slot1,
            PointRepr::G2(_) => Slot::Slot2,
        }
    }

    pub fn suite_id(&self) -> SuiteId {
        match self.0 {
            PointRepr::Transparent { .. } => SuiteId::TransparentTestPairing,
            _ => SuiteId::ProductionPairing,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self.0 {
            PointRepr::Transparent { x, .. } => x == 0,
            PointRepr::G1(p) => p.is_zero(),
            PointRepr::G2(p) => p.is_zero(),
        }
    }

    /// Canonical compressed encoding; fixed length per suite and slot.
    pub fn encode(&self) -> Vec<u8> {
        match self.0 {
            PointRepr::Transparent { x, .. } => x.to_be_bytes().to_vec(),
            PointRepr::G1(p) => {
                let mut out = Vec::with_capacity(G1_LEN);
                p.serialize_compressed(&mut out).expect("G1 serialization");
                out
            }
            PointRepr::G2(p) => {
                let mut out = Vec::with_capacity(G2_LEN);
                p.serialize_compressed(&mut out).expect("G2 serialization");
                out
            }
        }
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn transparent_exponent(&self) -> Option<u64> {
        match self.0 {
            PointRepr::Transparent { x, .. } => Some(x),
            _ => None,
        }
    }
}

impl fmt::Debug for SourcePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            PointRepr::Transparent { slot, x, .. } => write!(f, "SourcePoint({slot:?}, exp {x})"),
            _ => write!(f, "SourcePoint({:?}, {})", self.slot(), self.to_hex()),
        }
    }
}

impl TargetElement {
    fn transparent(x: u64) -> Self {
        TargetElement { suite: SuiteId::TransparentTestPairing, bytes: x.to_be_bytes().to_vec() }
    }

    /// Wraps a source-group element as a shared token (Diffie-Hellman variant).
    pub fn from_source_point(point: &SourcePoint) -> Self {
        TargetElement { suite: point.suite_id(), bytes: point.encode() }
    }

    pub fn suite_id(&self) -> SuiteId {
        self.suite
    }

    pub fn encoding(&self) -> &[u8] {
        &self.bytes
    }

    pub fn transparent_exponent(&self) -> Option<u64> {
        match self.suite {
            SuiteId::TransparentTestPairing => Some(u64::from_be_bytes(self.bytes[..8].try_into().ok()?)),
            SuiteId::ProductionPairing => None,
        }
    }
}

impl fmt::Debug for TargetElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transparent_exponent() {
            Some(x) => write!(f, "TargetElement(exp {x})"),
            None => write!(f, "TargetElement({}..)", hex::encode(&self.bytes[..8])),
        }
    }
}

impl Scalar {
    pub fn is_zero(&self) -> bool {
        match &self.0 {
            ScalarRepr::Transparent { v, .. } => *v == 0,
            ScalarRepr::Bls(s) => s.is_zero(),
        }
    }

    pub fn is_one(&self) -> bool {
        match &self.0 {
            ScalarRepr::Transparent { v, .. } => *v == 1,
            ScalarRepr::Bls(s) => s.is_one(),
        }
    }

    /// Suite-canonical 32-byte encoding (big-endian for the transparent
    /// suite, the field's compressed form for production).
    pub fn to_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        match &self.0 {
            ScalarRepr::Transparent { v, .. } => out[24..].copy_from_slice(&v.to_be_bytes()),
            ScalarRepr::Bls(s) => s.serialize_compressed(&mut out[..]).expect("Fr serialization"),
        }
        out
    }

    pub fn transparent_value(&self) -> Option<u64> {
        match &self.0 {
            ScalarRepr::Transparent { v, .. } => Some(*v),
            ScalarRepr::Bls(_) => None,
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}
