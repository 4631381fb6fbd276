//! The identity authority: system setup, certificate issuance, master erasure.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use crate::crypto::{GroupSuite, Identity, Scalar, Slot, SourcePoint, SuiteId, TOKEN_BITS};
use crate::enrollment::EnrollmentRegistry;
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: &str = "mcd-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SecurityProfile {
    Test,
    Production,
}

/// Published system parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemParams {
    pub suite: GroupSuite,
    /// `s * P1`
    pub p_pub1: SourcePoint,
    /// `s * P2`
    pub p_pub2: SourcePoint,
    pub n: u32,
    pub version: String,
}

impl SystemParams {
    /// `e(P_pub1, P2) == e(P1, P_pub2)`.
    pub fn is_consistent(&self) -> bool {
        let s = &self.suite;
        let lhs = s.pair(&self.p_pub1, &s.generator(Slot::Slot2));
        let rhs = s.pair(&s.generator(Slot::Slot1), &self.p_pub2);
        matches!((lhs, rhs), (Ok(l), Ok(r)) if l == r)
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            suite_id: self.suite.id(),
            q: hex::encode(self.suite.order_be()),
            generators: vec![self.suite.generator(Slot::Slot1).to_hex(), self.suite.generator(Slot::Slot2).to_hex()],
            p_pub1: self.p_pub1.to_hex(),
            p_pub2: self.p_pub2.to_hex(),
            n: self.n,
            version: self.version.clone(),
        }
    }

    pub fn from_file(file: &ParamsFile) -> Result<Self> {
        let order = hex::decode(&file.q).map_err(|_| Error::InvalidParams("q is not hex".into()))?;
        let suite = GroupSuite::from_published(file.suite_id, &order)?;
        let expected = [suite.generator(Slot::Slot1).to_hex(), suite.generator(Slot::Slot2).to_hex()];
        if file.generators != expected {
            return Err(Error::InvalidParams("generators do not match suite".into()));
        }
        if file.n != TOKEN_BITS {
            return Err(Error::InvalidParams(format!("unsupported H2 length {}", file.n)));
        }
        let params = SystemParams {
            suite,
            p_pub1: suite.decode_point_hex(Slot::Slot1, &file.p_pub1)?,
            p_pub2: suite.decode_point_hex(Slot::Slot2, &file.p_pub2)?,
            n: file.n,
            version: file.version.clone(),
        };
        if !params.is_consistent() || params.p_pub1.is_identity() {
            return Err(Error::InvalidParams("public keys are inconsistent".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("params serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        SystemParams::from_file(&serde_json::from_str(s)?)
    }
}

/// JSON form of [`SystemParams`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub suite_id: SuiteId,
    pub q: String,
    pub generators: Vec<String>,
    pub p_pub1: String,
    pub p_pub2: String,
    pub n: u32,
    pub version: String,
}

/// A member's secret credential `(s * Q1(id), s * Q2(id))`.
#[derive(Clone, PartialEq, Eq)]
pub struct Certificate {
    pub identity: Identity,
    pub c1: SourcePoint,
    pub c2: SourcePoint,
}

impl std::fmt::Debug for Certificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Certificate({})", self.identity)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub identity: Identity,
    pub c1: String,
    pub c2: String,
}

impl Certificate {
    pub fn to_file(&self) -> CertificateFile {
        CertificateFile { identity: self.identity.clone(), c1: self.c1.to_hex(), c2: self.c2.to_hex() }
    }

    pub fn from_file(suite: &GroupSuite, file: &CertificateFile) -> Result<Self> {
        Ok(Certificate {
            identity: file.identity.clone(),
            c1: suite.decode_point_hex(Slot::Slot1, &file.c1)?,
            c2: suite.decode_point_hex(Slot::Slot2, &file.c2)?,
        })
    }
}

/// True iff both pairing consistency equations hold for `cert`.
pub fn verify_certificate(params: &SystemParams, cert: &Certificate) -> bool {
    let s = &params.suite;
    let Ok((q1, q2)) = s.hash_to_points(&cert.identity) else {
        return false;
    };
    let check = || -> Result<bool> {
        let first = s.pair(&cert.c1, &s.generator(Slot::Slot2))? == s.pair(&q1, &params.p_pub2)?;
        let second = s.pair(&s.generator(Slot::Slot1), &cert.c2)? == s.pair(&params.p_pub1, &q2)?;
        Ok(first && second)
    };
    check().unwrap_or(false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecretState {
    Live,
    Erased,
}

/// The master scalar `s`. Its buffer is zeroized on erase and on drop.
pub struct MasterSecret {
    suite: GroupSuite,
    bytes: [u8; 32],
    state: SecretState,
}

impl MasterSecret {
    fn new(suite: GroupSuite, s: &Scalar) -> Self {
        MasterSecret { suite, bytes: s.to_bytes(), state: SecretState::Live }
    }

    pub fn state(&self) -> SecretState {
        self.state
    }

    fn scalar(&self) -> Result<Scalar> {
        match self.state {
            SecretState::Live => self.suite.decode_scalar(&self.bytes),
            SecretState::Erased => Err(Error::IssuanceClosed),
        }
    }

    /// Hex form of the live scalar, for keeping the authority across process
    /// restarts during an issuance window.
    pub fn export_hex(&self) -> Result<String> {
        self.scalar().map(|s| hex::encode(s.to_bytes()))
    }

    /// Idempotent.
    pub fn erase(&mut self) {
        self.bytes.zeroize();
        self.state = SecretState::Erased;
    }
}

impl Drop for MasterSecret {
    fn drop(&mut self) {
        self.bytes.zeroize();
    }
}

impl std::fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MasterSecret({:?})", self.state)
    }
}

/// Parameters, master secret and the enrollment registry of one deployment.
#[derive(Debug)]
pub struct Authority {
    params: SystemParams,
    master: MasterSecret,
    registry: EnrollmentRegistry,
}

/// Runs setup. A seed makes the result reproducible and is refused outside
/// the test profile, as is the transparent suite.
pub fn setup(profile: SecurityProfile, suite: GroupSuite, seed: Option<[u8; 32]>) -> Result<Authority> {
    if profile == SecurityProfile::Production {
        if seed.is_some() {
            return Err(Error::Policy("seeded setup is only allowed in the test profile".into()));
        }
        if suite != GroupSuite::Production {
            return Err(Error::Policy("the production profile requires the production pairing".into()));
        }
    }
    let mut rng = match seed {
        Some(seed) => ChaCha20Rng::from_seed(seed),
        None => ChaCha20Rng::from_entropy(),
    };
    let s = suite.random_scalar(&mut rng);
    let registry = EnrollmentRegistry::generate(&mut rng);
    Authority::with_master_scalar(suite, &s, registry)
}

impl Authority {
    /// Builds an authority around a known master scalar.
    pub fn with_master_scalar(suite: GroupSuite, s: &Scalar, registry: EnrollmentRegistry) -> Result<Self> {
        if s.is_zero() {
            return Err(Error::InvalidParams("master scalar must be nonzero".into()));
        }
        let params = SystemParams {
            suite,
            p_pub1: suite.mul(&suite.generator(Slot::Slot1), s)?,
            p_pub2: suite.mul(&suite.generator(Slot::Slot2), s)?,
            n: TOKEN_BITS,
            version: PROTOCOL_VERSION.to_owned(),
        };
        Ok(Authority { params, master: MasterSecret::new(suite, s), registry })
    }

    /// Reopens a live authority from [`MasterSecret::export_hex`] output.
    pub fn restore(params: SystemParams, master_hex: &str, registry: EnrollmentRegistry) -> Result<Self> {
        let bytes: [u8; 32] =
            hex::decode(master_hex).ok().and_then(|b| b.try_into().ok()).ok_or(Error::InvalidEncoding)?;
        let s = params.suite.decode_scalar(&bytes)?;
        let authority = Authority::with_master_scalar(params.suite, &s, registry)?;
        if authority.params != params {
            return Err(Error::InvalidParams("master secret does not match parameters".into()));
        }
        Ok(authority)
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn registry(&self) -> &EnrollmentRegistry {
        &self.registry
    }

    pub fn master(&self) -> &MasterSecret {
        &self.master
    }

    /// Issues `C(id)` to a caller that proves ownership of `id`.
    pub fn issue_certificate(&self, id: &Identity, auth_proof: &[u8]) -> Result<Certificate> {
        let s = self.master.scalar()?;
        if !self.registry.verify(id, auth_proof) {
            return Err(Error::Unauthorized);
        }
        let suite = &self.params.suite;
        let (q1, q2) = suite.hash_to_points(id)?;
        Ok(Certificate { identity: id.clone(), c1: suite.mul(&q1, &s)?, c2: suite.mul(&q2, &s)? })
    }

    pub fn erase_master(&mut self) {
        self.master.erase();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::TransparentGroup;

    fn id(s: &str) -> Identity {
        Identity::new(s).unwrap()
    }

    fn toy_authority(q: u64, s: u64) -> Authority {
        let suite = GroupSuite::transparent(q).unwrap();
        let reg = EnrollmentRegistry::generate(&mut ChaCha20Rng::seed_from_u64(9));
        Authority::with_master_scalar(suite, &suite.scalar_from_u64(s).unwrap(), reg).unwrap()
    }

    #[test]
    fn seeded_test_setup_is_deterministic() {
        let suite = GroupSuite::Transparent(TransparentGroup::large());
        let a = setup(SecurityProfile::Test, suite, Some([7; 32])).unwrap();
        let b = setup(SecurityProfile::Test, suite, Some([7; 32])).unwrap();
        assert_eq!(a.params().to_json(), b.params().to_json());
        assert_eq!(a.registry(), b.registry());
    }

    #[test]
    fn production_refuses_seed_and_toy_suite() {
        assert!(matches!(
            setup(SecurityProfile::Production, GroupSuite::Production, Some([1; 32])),
            Err(Error::Policy(_))
        ));
        assert!(matches!(
            setup(SecurityProfile::Production, GroupSuite::transparent(101).unwrap(), None),
            Err(Error::Policy(_))
        ));
    }

    #[test]
    fn public_key_exponent_is_master_times_generator() {
        let auth = toy_authority(101, 3);
        assert_eq!(auth.params().p_pub1.transparent_exponent(), Some(3));
        assert_eq!(auth.params().p_pub2.transparent_exponent(), Some(3));
        assert!(auth.params().is_consistent());
    }

    #[test]
    fn certificate_exponent_is_master_times_hash() {
        let auth = toy_authority(101, 3);
        let suite = auth.params().suite;
        // Find an identity whose hash exponent is 7 by enumeration.
        let bob = (0..10_000)
            .map(|i| id(&format!("bob{i}")))
            .find(|i| suite.hash_to_slot(i, Slot::Slot1).unwrap().transparent_exponent() == Some(7))
            .expect("some identity hashes to 7 in Z_101");
        let cert = auth.issue_certificate(&bob, &auth.registry().secret_for(&bob)).unwrap();
        assert_eq!(cert.c1.transparent_exponent(), Some(21));
        assert_eq!(cert.c2.transparent_exponent(), Some(21));
    }

    #[test]
    fn issuance_requires_proof_and_live_master() {
        let mut auth = toy_authority(101, 5);
        let alice = id("alice");
        let proof = auth.registry().secret_for(&alice);
        assert!(matches!(auth.issue_certificate(&alice, b"nope"), Err(Error::Unauthorized)));
        let bob_proof = auth.registry().secret_for(&id("bob"));
        assert!(matches!(auth.issue_certificate(&alice, &bob_proof), Err(Error::Unauthorized)));
        let cert = auth.issue_certificate(&alice, &proof).unwrap();
        assert!(verify_certificate(auth.params(), &cert));

        auth.erase_master();
        auth.erase_master();
        assert!(matches!(auth.issue_certificate(&alice, &proof), Err(Error::IssuanceClosed)));
        assert!(verify_certificate(auth.params(), &cert), "certs outlive the master");
        assert_eq!(auth.master().state(), SecretState::Erased);
        assert_eq!(auth.master().bytes, [0u8; 32], "scalar buffer zeroized");
        assert!(auth.master().export_hex().is_err());
    }

    #[test]
    fn production_certificate_verifies_and_tampering_fails() {
        let auth = setup(SecurityProfile::Test, GroupSuite::Production, Some([2; 32])).unwrap();
        let alice = id("+31600000001");
        let cert = auth.issue_certificate(&alice, &auth.registry().secret_for(&alice)).unwrap();
        assert!(verify_certificate(auth.params(), &cert));
        let mut forged = cert.clone();
        forged.c1 = auth.params().suite.hash_to_slot(&id("random"), Slot::Slot1).unwrap();
        assert!(!verify_certificate(auth.params(), &forged));
        let mut renamed = cert.clone();
        renamed.identity = id("+31600000002");
        assert!(!verify_certificate(auth.params(), &renamed));
    }

    #[test]
    fn certificate_under_wrong_identity_never_verifies() {
        let suite = GroupSuite::Transparent(TransparentGroup::large());
        let auth = setup(SecurityProfile::Test, suite, Some([4; 32])).unwrap();
        let ids: Vec<_> = (0..30).map(|i| id(&format!("+4470000{i:04}"))).collect();
        let certs: Vec<_> =
            ids.iter().map(|i| auth.issue_certificate(i, &auth.registry().secret_for(i)).unwrap()).collect();
        for (x, cert) in certs.iter().enumerate() {
            for (y, other) in ids.iter().enumerate() {
                let presented = Certificate { identity: other.clone(), ..cert.clone() };
                assert_eq!(verify_certificate(auth.params(), &presented), x == y);
            }
        }
    }

    #[test]
    fn files_round_trip() {
        let auth = setup(SecurityProfile::Test, GroupSuite::Production, Some([5; 32])).unwrap();
        let params = SystemParams::from_json(&auth.params().to_json()).unwrap();
        assert_eq!(&params, auth.params());
        let alice = id("alice");
        let cert = auth.issue_certificate(&alice, &auth.registry().secret_for(&alice)).unwrap();
        let json = serde_json::to_string(&cert.to_file()).unwrap();
        let back = Certificate::from_file(&params.suite, &serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, cert);

        let restored =
            Authority::restore(params, &auth.master().export_hex().unwrap(), auth.registry().clone()).unwrap();
        assert_eq!(restored.issue_certificate(&alice, &auth.registry().secret_for(&alice)).unwrap(), cert);
    }
}
