//! Public-key directory that releases a member's key only to callers holding
//! one of the gate tokens the member registered.
//!
//! The gate a member `A` registers for contact `M` is the second component of
//! `A`'s tuple for `M`, which is exactly what the matching server returns to
//! `M` on mutual discovery. See [`crate::client::MemberState::directory_gates`].

use std::collections::{HashMap, HashSet};
use std::sync::RwLock;

use crate::crypto::{AugmentedToken, Identity};
use crate::enrollment::EnrollmentRegistry;
use crate::error::{Error, Result};
use crate::net::Transport;
use crate::wire::{ErrorCode, Request, Response, Service};

#[derive(Clone, Debug, Default)]
struct GatedKeyRecord {
    pubkey: Vec<u8>,
    gates: HashSet<AugmentedToken>,
}

pub struct KeyDirectory {
    registry: EnrollmentRegistry,
    records: RwLock<HashMap<Identity, GatedKeyRecord>>,
}

impl KeyDirectory {
    pub fn new(registry: EnrollmentRegistry) -> Self {
        KeyDirectory { registry, records: RwLock::new(HashMap::new()) }
    }

    /// Stores `pubkey` and adds `gates`, then removes `revoke`.
    pub fn put(
        &self,
        owner: Identity,
        pubkey: Vec<u8>,
        gates: impl IntoIterator<Item = AugmentedToken>,
        revoke: impl IntoIterator<Item = AugmentedToken>,
        proof: &[u8],
    ) -> Result<()> {
        if !self.registry.verify(&owner, proof) {
            return Err(Error::Unauthorized);
        }
        let mut records = self.records.write().unwrap();
        let record = records.entry(owner).or_default();
        record.pubkey = pubkey;
        record.gates.extend(gates);
        for g in revoke {
            record.gates.remove(&g);
        }
        Ok(())
    }

    /// The key if `token` opens one of `target`'s gates.
    pub fn get(&self, target: &Identity, token: &AugmentedToken) -> Option<Vec<u8>> {
        let records = self.records.read().unwrap();
        records.get(target).filter(|r| r.gates.contains(token)).map(|r| r.pubkey.clone())
    }
}

impl Service for KeyDirectory {
    fn handle(&self, request: Request) -> Response {
        match request {
            Request::DirPut { id, key, gates, proof, revoke } => {
                let parsed = (|| {
                    let id = Identity::new(&id)?;
                    let key = hex::decode(&key).map_err(|_| Error::InvalidEncoding)?;
                    let proof = hex::decode(&proof).map_err(|_| Error::InvalidEncoding)?;
                    Ok::<_, Error>((id, key, proof))
                })();
                match parsed.and_then(|(id, key, proof)| self.put(id, key, gates, revoke, &proof)) {
                    Ok(()) => Response::ok(),
                    Err(Error::Unauthorized) => Response::err(ErrorCode::Unauthorized),
                    Err(_) => Response::err(ErrorCode::Malformed),
                }
            }
            Request::DirGet { id, token } => {
                // Unknown, malformed and wrong-token lookups all get the same answer.
                match Identity::new(&id).ok().and_then(|id| self.get(&id, &token)) {
                    Some(key) => Response::Key { key: hex::encode(key) },
                    None => Response::err(ErrorCode::Denied),
                }
            }
            _ => Response::err(ErrorCode::Mode),
        }
    }
}

pub fn dir_put(
    transport: &dyn Transport,
    owner: &Identity,
    pubkey: &[u8],
    gates: Vec<AugmentedToken>,
    revoke: Vec<AugmentedToken>,
    proof: &[u8],
) -> Result<()> {
    let request =
        Request::DirPut { id: owner.to_string(), key: hex::encode(pubkey), gates, proof: hex::encode(proof), revoke };
    transport.exchange(&request)?.into_result().map(|_| ())
}

/// `Ok(None)` on denial.
pub fn dir_get(transport: &dyn Transport, target: &Identity, token: &AugmentedToken) -> Result<Option<Vec<u8>>> {
    match transport.exchange(&Request::DirGet { id: target.to_string(), token: *token })? {
        Response::Key { key } => Ok(Some(hex::decode(key).map_err(|_| Error::UnexpectedResponse)?)),
        Response::Err { err: ErrorCode::Denied } => Ok(None),
        Response::Err { err } => Err(Error::Server(err)),
        _ => Err(Error::UnexpectedResponse),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn id(s: &str) -> Identity {
        Identity::new(s).unwrap()
    }

    fn tok(b: u8) -> AugmentedToken {
        AugmentedToken::from_bytes([b; 32])
    }

    #[test]
    fn gates_accumulate_and_revoke() {
        let reg = EnrollmentRegistry::generate(&mut ChaCha20Rng::seed_from_u64(0));
        let dir = KeyDirectory::new(reg.clone());
        let a = id("alice");
        let proof = reg.secret_for(&a);
        assert!(matches!(dir.put(a.clone(), vec![1], [tok(1)], [], b"x"), Err(Error::Unauthorized)));
        dir.put(a.clone(), vec![1], [tok(1)], [], &proof).unwrap();
        dir.put(a.clone(), vec![1], [tok(2)], [], &proof).unwrap();
        assert_eq!(dir.get(&a, &tok(1)), Some(vec![1]));
        assert_eq!(dir.get(&a, &tok(2)), Some(vec![1]));
        assert_eq!(dir.get(&a, &tok(3)), None);
        dir.put(a.clone(), vec![1], [], [tok(1)], &proof).unwrap();
        assert_eq!(dir.get(&a, &tok(1)), None);
    }

    #[test]
    fn denials_are_byte_identical() {
        let reg = EnrollmentRegistry::generate(&mut ChaCha20Rng::seed_from_u64(0));
        let dir = KeyDirectory::new(reg.clone());
        let a = id("alice");
        dir.put(a.clone(), vec![7; 48], [tok(1)], [], &reg.secret_for(&a)).unwrap();
        let t = tok(9).to_hex();
        let bad_token = dir.handle_line(&format!(r#"{{"op":"dir_get","id":"alice","token":"{t}"}}"#));
        let no_record = dir.handle_line(&format!(r#"{{"op":"dir_get","id":"nobody","token":"{t}"}}"#));
        assert_eq!(bad_token, no_record);
        assert_eq!(bad_token, r#"{"err":"denied"}"#);
    }
}
