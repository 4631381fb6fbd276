//! Simulated out-of-band identity proofing.
//!
//! Every identity has an enrollment secret derived from a registry key. Only
//! the rightful owner of an identity is handed its secret; services that must
//! authenticate an identity (issuer, key server, key directory) hold the
//! registry and check presented proofs against it.

use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::crypto::Identity;

type HmacSha256 = Hmac<Sha256>;

const ENROLL_TAG: &[u8] = b"MCD-ENROLL-v1";

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrollmentRegistry {
    #[serde(with = "hex::serde")]
    key: [u8; 32],
}

impl EnrollmentRegistry {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        EnrollmentRegistry { key }
    }

    fn mac(&self, id: &Identity) -> HmacSha256 {
        let mut mac = HmacSha256::new_from_slice(&self.key).expect("hmac accepts any key length");
        mac.update(ENROLL_TAG);
        mac.update(&id.hash_encoding());
        mac
    }

    /// The secret handed to the owner of `id`.
    pub fn secret_for(&self, id: &Identity) -> Vec<u8> {
        self.mac(id).finalize().into_bytes().to_vec()
    }

    /// Constant-time check of a presented proof.
    pub fn verify(&self, id: &Identity, proof: &[u8]) -> bool {
        self.mac(id).verify_slice(proof).is_ok()
    }
}

impl std::fmt::Debug for EnrollmentRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("EnrollmentRegistry(..)")
    }
}
