//! Key-server variant: members publish Diffie-Hellman keys instead of holding
//! certificates, and the key server answers for unenrolled identities with
//! deterministic phantom keys.

use std::collections::HashMap;
use std::sync::{Mutex, RwLock};

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha256;

use crate::client::{DiscoveryOutput, MemberState};
use crate::crypto::{GroupSuite, Identity, Scalar, Slot, SourcePoint, TargetElement};
use crate::enrollment::EnrollmentRegistry;
use crate::error::{Error, Result};
use crate::net::Transport;
use crate::wire::{ErrorCode, Request, Response, Service};

const PHANTOM_TAG: &[u8] = b"MCD-PHANTOM-v1";

#[derive(Clone)]
pub struct DhKeyPair {
    sk: Scalar,
    pk: SourcePoint,
}

impl DhKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(suite: &GroupSuite, rng: &mut R) -> Self {
        Self::from_scalar(suite, suite.random_scalar(rng)).expect("random scalars are nonzero")
    }

    pub fn from_scalar(suite: &GroupSuite, sk: Scalar) -> Result<Self> {
        if sk.is_zero() {
            return Err(Error::InvalidParams("secret key must be nonzero".into()));
        }
        let pk = suite.mul(&suite.generator(Slot::Slot1), &sk)?;
        Ok(DhKeyPair { sk, pk })
    }

    pub fn public(&self) -> &SourcePoint {
        &self.pk
    }

    pub fn secret(&self) -> &Scalar {
        &self.sk
    }
}

impl std::fmt::Debug for DhKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DhKeyPair({:?})", self.pk)
    }
}

/// `other_pk^sk`, wrapped as a token.
pub fn dh_token(suite: &GroupSuite, own: &DhKeyPair, other_pk: &SourcePoint) -> Result<TargetElement> {
    if other_pk.slot() != Slot::Slot1 {
        return Err(Error::SlotMismatch);
    }
    if other_pk.is_identity() {
        return Err(Error::DegenerateElement);
    }
    Ok(TargetElement::from_source_point(&suite.mul(other_pk, &own.sk)?))
}

pub struct KeyServer {
    suite: GroupSuite,
    registry: EnrollmentRegistry,
    phantom_secret: [u8; 32],
    enrolled: RwLock<HashMap<Identity, SourcePoint>>,
    fetches: Mutex<HashMap<Identity, u64>>,
}

impl KeyServer {
    pub fn new(suite: GroupSuite, registry: EnrollmentRegistry, phantom_secret: [u8; 32]) -> Self {
        KeyServer {
            suite,
            registry,
            phantom_secret,
            enrolled: RwLock::new(HashMap::new()),
            fetches: Mutex::new(HashMap::new()),
        }
    }

    pub fn suite(&self) -> &GroupSuite {
        &self.suite
    }

    /// The key pair behind `id`'s phantom key. Only the key server can derive
    /// it; exposing it to the matching server is exactly the collusion the
    /// deployment must rule out.
    pub fn phantom_keypair(&self, id: &Identity) -> DhKeyPair {
        let mut wide = [0u8; 64];
        for (lane, chunk) in wide.chunks_mut(32).enumerate() {
            let mut mac = Hmac::<Sha256>::new_from_slice(&self.phantom_secret).expect("any key length");
            mac.update(PHANTOM_TAG);
            mac.update(&id.hash_encoding());
            mac.update(&[lane as u8]);
            chunk.copy_from_slice(&mac.finalize().into_bytes());
        }
        DhKeyPair::from_scalar(&self.suite, self.suite.scalar_from_wide(&wide)).expect("scalar_from_wide is nonzero")
    }

    pub fn enroll(&self, id: Identity, pk: SourcePoint, proof: &[u8]) -> Result<()> {
        if pk.slot() != Slot::Slot1 || pk.is_identity() {
            return Err(Error::InvalidEncoding);
        }
        if !self.registry.verify(&id, proof) {
            return Err(Error::Unauthorized);
        }
        self.enrolled.write().unwrap().insert(id, pk);
        Ok(())
    }

    pub fn get_key(&self, id: &Identity) -> SourcePoint {
        // Derive the phantom unconditionally so both branches do the same work.
        let phantom = self.phantom_keypair(id).pk;
        let enrolled = self.enrolled.read().unwrap().get(id).copied();
        *self.fetches.lock().unwrap().entry(id.clone()).or_default() += 1;
        enrolled.unwrap_or(phantom)
    }

    /// Everything the key server learns from lookups: per-identity fetch counts.
    pub fn fetch_counts(&self) -> HashMap<Identity, u64> {
        self.fetches.lock().unwrap().clone()
    }

    pub fn is_enrolled(&self, id: &Identity) -> bool {
        self.enrolled.read().unwrap().contains_key(id)
    }
}

impl Service for KeyServer {
    fn handle(&self, request: Request) -> Response {
        match request {
            Request::GetKey { id } => match Identity::new(&id) {
                Ok(id) => Response::Key { key: self.get_key(&id).to_hex() },
                Err(_) => Response::err(ErrorCode::Malformed),
            },
            Request::Enroll { id, key, proof } => {
                let parsed = (|| {
                    let id = Identity::new(&id)?;
                    let pk = self.suite.decode_point_hex(Slot::Slot1, &key)?;
                    let proof = hex::decode(&proof).map_err(|_| Error::InvalidEncoding)?;
                    Ok::<_, Error>((id, pk, proof))
                })();
                match parsed.and_then(|(id, pk, proof)| self.enroll(id, pk, &proof)) {
                    Ok(()) => Response::ok(),
                    Err(Error::Unauthorized) => Response::err(ErrorCode::Unauthorized),
                    Err(_) => Response::err(ErrorCode::Malformed),
                }
            }
            _ => Response::err(ErrorCode::Mode),
        }
    }
}

pub fn fetch_key(suite: &GroupSuite, transport: &dyn Transport, id: &Identity) -> Result<SourcePoint> {
    match transport.exchange(&Request::GetKey { id: id.to_string() })?.into_result()? {
        Response::Key { key } => suite.decode_point_hex(Slot::Slot1, &key),
        _ => Err(Error::UnexpectedResponse),
    }
}

pub fn enroll(transport: &dyn Transport, id: &Identity, keypair: &DhKeyPair, proof: &[u8]) -> Result<()> {
    let request = Request::Enroll { id: id.to_string(), key: keypair.public().to_hex(), proof: hex::encode(proof) };
    transport.exchange(&request)?.into_result().map(|_| ())
}

/// Fetches every contact's key, then runs the ordinary static flow.
pub fn ks_run(
    member: &mut MemberState,
    keys: &dyn Transport,
    matching: &dyn Transport,
    between_phases: impl FnOnce() -> Result<()>,
) -> Result<DiscoveryOutput> {
    let suite = member.params().suite;
    for contact in member.contacts().all() {
        let key = fetch_key(&suite, keys, &contact)?;
        member.set_peer_key(contact, key);
    }
    member.run_static(matching, between_phases)
}
