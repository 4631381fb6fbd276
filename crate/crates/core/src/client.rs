//! Member-side protocol logic: tokens, tuple construction and the static and
//! dynamic discovery flows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::authority::{verify_certificate, Certificate, SystemParams};
use crate::crypto::{ordered_h2, AugmentedToken, Identity, Slot, SourcePoint, TargetElement, TuplePair};
use crate::error::{Error, Result};
use crate::net::Transport;
use crate::variants::keyserver::{dh_token, DhKeyPair};
use crate::wire::{Request, Response};

/// A member's contacts, split into visible and hidden.
///
/// Hidden contacts can be discovered by the member but never discover it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContactList {
    visible: BTreeSet<Identity>,
    hidden: BTreeSet<Identity>,
}

impl ContactList {
    pub fn new(
        owner: &Identity,
        visible: impl IntoIterator<Item = Identity>,
        hidden: impl IntoIterator<Item = Identity>,
    ) -> Result<Self> {
        let visible: BTreeSet<_> = visible.into_iter().collect();
        let hidden: BTreeSet<_> = hidden.into_iter().collect();
        if visible.contains(owner) || hidden.contains(owner) {
            return Err(Error::SelfContact);
        }
        if let Some(both) = visible.intersection(&hidden).next() {
            return Err(Error::InvalidParams(format!("{both} is both visible and hidden")));
        }
        Ok(ContactList { visible, hidden })
    }

    pub fn visible(&self) -> &BTreeSet<Identity> {
        &self.visible
    }

    pub fn hidden(&self) -> &BTreeSet<Identity> {
        &self.hidden
    }

    pub fn contains(&self, id: &Identity) -> bool {
        self.visible.contains(id) || self.hidden.contains(id)
    }

    pub fn is_hidden(&self, id: &Identity) -> bool {
        self.hidden.contains(id)
    }

    /// `visible ∪ hidden`, ascending.
    pub fn all(&self) -> Vec<Identity> {
        self.visible.union(&self.hidden).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.visible.len() + self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn remove(&mut self, id: &Identity) -> bool {
        self.visible.remove(id) | self.hidden.remove(id)
    }
}

/// JSON contact list file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactListFile {
    pub identity: Identity,
    #[serde(default)]
    pub visible: Vec<Identity>,
    #[serde(default)]
    pub hidden: Vec<Identity>,
}

impl ContactListFile {
    pub fn to_contacts(&self) -> Result<ContactList> {
        ContactList::new(&self.identity, self.visible.iter().cloned(), self.hidden.iter().cloned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryMode {
    Static,
    Dynamic,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiscoveryOutput {
    pub discovered: BTreeSet<Identity>,
    /// Set when some exchange failed and the output may miss contacts.
    pub incomplete: bool,
}

/// JSON discovery report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub identity: Identity,
    pub discovered: Vec<Identity>,
    pub mode: DiscoveryMode,
    pub incomplete: bool,
}

/// What a member uses to derive shared tokens.
#[derive(Clone, Debug)]
pub enum Credential {
    Certificate(Certificate),
    DiffieHellman(DhKeyPair),
}

/// True iff some returned tuple carries `expected_second`.
pub fn process_query_response(expected_second: &AugmentedToken, returned: &[TuplePair]) -> bool {
    returned.iter().any(|t| t.second == *expected_second)
}

pub struct MemberState {
    identity: Identity,
    params: Arc<SystemParams>,
    contacts: ContactList,
    credential: Credential,
    own_point: SourcePoint,
    slot1: HashMap<Identity, SourcePoint>,
    tokens: HashMap<Identity, TargetElement>,
    peer_keys: HashMap<Identity, SourcePoint>,
    discovered: BTreeMap<Identity, AugmentedToken>,
    rng: ChaCha20Rng,
}

impl std::fmt::Debug for MemberState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemberState")
            .field("identity", &self.identity)
            .field("contacts", &self.contacts.len())
            .field("discovered", &self.discovered.len())
            .finish()
    }
}

impl MemberState {
    /// A certificate-holding member. The certificate must verify.
    pub fn new(params: Arc<SystemParams>, certificate: Certificate, contacts: ContactList) -> Result<Self> {
        if !verify_certificate(&params, &certificate) {
            return Err(Error::InvalidParams(format!("certificate for {} does not verify", certificate.identity)));
        }
        Self::new_unverified(params, Credential::Certificate(certificate), contacts)
    }

    /// A member whose tokens come from Diffie-Hellman over key-server keys.
    pub fn with_dh(
        params: Arc<SystemParams>,
        identity: Identity,
        keypair: DhKeyPair,
        contacts: ContactList,
    ) -> Result<Self> {
        let mut state = Self::new_unverified(params, Credential::DiffieHellman(keypair), contacts)?;
        state.identity = identity;
        state.own_point = state.params.suite.hash_to_slot(&state.identity, Slot::Slot1)?;
        Ok(state)
    }

    /// Skips certificate verification. Used to model adversaries holding a
    /// forged or absent certificate.
    pub fn new_unverified(params: Arc<SystemParams>, credential: Credential, contacts: ContactList) -> Result<Self> {
        let identity = match &credential {
            Credential::Certificate(c) => c.identity.clone(),
            // Replaced by with_dh.
            Credential::DiffieHellman(_) => Identity::new("-")?,
        };
        if contacts.contains(&identity) {
            return Err(Error::SelfContact);
        }
        let own_point = params.suite.hash_to_slot(&identity, Slot::Slot1)?;
        Ok(MemberState {
            identity,
            params,
            contacts,
            credential,
            own_point,
            slot1: HashMap::new(),
            tokens: HashMap::new(),
            peer_keys: HashMap::new(),
            discovered: BTreeMap::new(),
            rng: ChaCha20Rng::from_entropy(),
        })
    }

    /// Reseeds the randomness used for hidden-contact filler and message order.
    pub fn seed_rng(&mut self, seed: u64) {
        self.rng = ChaCha20Rng::seed_from_u64(seed);
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn contacts(&self) -> &ContactList {
        &self.contacts
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn discovered(&self) -> BTreeSet<Identity> {
        self.discovered.keys().cloned().collect()
    }

    pub fn set_peer_key(&mut self, id: Identity, key: SourcePoint) {
        self.tokens.remove(&id);
        self.peer_keys.insert(id, key);
    }

    /// Adds a contact (dynamic setting).
    pub fn add_contact(&mut self, id: Identity, hidden: bool) -> Result<()> {
        if id == self.identity {
            return Err(Error::SelfContact);
        }
        self.contacts.remove(&id);
        let visible = self.contacts.visible.iter().cloned();
        let hidden_set = self.contacts.hidden.iter().cloned();
        let (v, h): (Vec<_>, Vec<_>) = (visible.collect(), hidden_set.collect());
        self.contacts = if hidden {
            ContactList::new(&self.identity, v, h.into_iter().chain([id]))?
        } else {
            ContactList::new(&self.identity, v.into_iter().chain([id]), h)?
        };
        Ok(())
    }

    fn point_of(&mut self, id: &Identity) -> Result<SourcePoint> {
        if let Some(p) = self.slot1.get(id) {
            return Ok(*p);
        }
        let p = self.params.suite.hash_to_slot(id, Slot::Slot1)?;
        self.slot1.insert(id.clone(), p);
        Ok(p)
    }

    /// The shared token `T(self, contact)`, identical to `T(contact, self)`.
    pub fn compute_token(&mut self, contact: &Identity) -> Result<TargetElement> {
        if *contact == self.identity {
            return Err(Error::SelfContact);
        }
        if let Some(t) = self.tokens.get(contact) {
            return Ok(t.clone());
        }
        let suite = self.params.suite;
        let token = match &self.credential {
            // e(Q1(min), Q2(max))^s, with min/max over identities.
            Credential::Certificate(cert) => {
                if self.identity < *contact {
                    suite.pair(&cert.c1, &suite.hash_to_slot(contact, Slot::Slot2)?)?
                } else {
                    suite.pair(&suite.hash_to_slot(contact, Slot::Slot1)?, &cert.c2)?
                }
            }
            Credential::DiffieHellman(keypair) => {
                let peer = self.peer_keys.get(contact).ok_or_else(|| Error::MissingPeerKey(contact.to_string()))?;
                dh_token(&suite, keypair, peer)?
            }
        };
        self.tokens.insert(contact.clone(), token.clone());
        Ok(token)
    }

    fn visible_tuple(&mut self, contact: &Identity) -> Result<(TuplePair, TargetElement, SourcePoint)> {
        let token = self.compute_token(contact)?;
        let theirs = self.point_of(contact)?;
        let first = ordered_h2(&token, &self.own_point, &theirs);
        let second = ordered_h2(&token, &theirs, &theirs);
        Ok((TuplePair::new(first, second), token, theirs))
    }

    fn require_contact(&self, contact: &Identity) -> Result<()> {
        if *contact == self.identity {
            return Err(Error::SelfContact);
        }
        if !self.contacts.contains(contact) {
            return Err(Error::UnknownContact(contact.to_string()));
        }
        Ok(())
    }

    /// Submission tuple. Hidden contacts get a uniformly random second component.
    pub fn make_submission(&mut self, contact: &Identity) -> Result<TuplePair> {
        self.require_contact(contact)?;
        let (mut tuple, _, _) = self.visible_tuple(contact)?;
        if self.contacts.is_hidden(contact) {
            tuple.second = AugmentedToken::random(&mut self.rng);
        }
        Ok(tuple)
    }

    /// Query tuple plus the second component a genuine partner would have stored.
    pub fn make_query(&mut self, contact: &Identity) -> Result<(TuplePair, AugmentedToken)> {
        self.require_contact(contact)?;
        let (tuple, token, _) = self.visible_tuple(contact)?;
        let expected = ordered_h2(&token, &self.own_point, &self.own_point);
        Ok((tuple, expected))
    }

    /// Deletion tuple; allowed for contacts already dropped from the list.
    pub fn make_delete(&mut self, contact: &Identity) -> Result<TuplePair> {
        if *contact == self.identity {
            return Err(Error::SelfContact);
        }
        Ok(self.visible_tuple(contact)?.0)
    }

    /// Gate values to register at the key directory, one per visible contact.
    /// Each equals what that contact receives from the matching server upon
    /// mutual discovery.
    pub fn directory_gates(&mut self) -> Result<Vec<AugmentedToken>> {
        let visible: Vec<_> = self.contacts.visible.iter().cloned().collect();
        visible.iter().map(|c| self.directory_gate(c)).collect()
    }

    /// The gate registered for one visible contact.
    pub fn directory_gate(&mut self, contact: &Identity) -> Result<AugmentedToken> {
        Ok(self.visible_tuple(contact)?.0.second)
    }

    pub fn derive_directory_access_token(&self, contact: &Identity) -> Result<AugmentedToken> {
        self.discovered.get(contact).copied().ok_or_else(|| Error::NotDiscovered(contact.to_string()))
    }

    fn shuffled_contacts(&mut self) -> Vec<Identity> {
        let mut all = self.contacts.all();
        all.shuffle(&mut self.rng);
        all
    }

    /// Submission phase: one message per contact. Returns the number of
    /// failed exchanges.
    pub fn submit_all(&mut self, transport: &dyn Transport) -> Result<usize> {
        let mut failed = 0;
        for contact in self.shuffled_contacts() {
            let tuple = self.make_submission(&contact)?;
            match transport.exchange(&Request::submit(&tuple)) {
                Ok(Response::Ok { ok: true }) => {}
                Ok(Response::Err { err }) => return Err(Error::Server(err)),
                Ok(_) => return Err(Error::UnexpectedResponse),
                Err(e) if e.is_retryable() => failed += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(failed)
    }

    fn query_one(&mut self, contact: &Identity, transport: &dyn Transport) -> Result<bool> {
        let (tuple, expected) = self.make_query(contact)?;
        let matches = match transport.exchange(&Request::query(&tuple))? {
            Response::Matches { matches } => matches,
            Response::Err { err } => return Err(Error::Server(err)),
            _ => return Err(Error::UnexpectedResponse),
        };
        let found = process_query_response(&expected, &matches);
        if found {
            self.discovered.insert(contact.clone(), expected);
        }
        Ok(found)
    }

    /// Query phase over every contact.
    pub fn query_all(&mut self, transport: &dyn Transport) -> Result<DiscoveryOutput> {
        let mut incomplete = false;
        for contact in self.shuffled_contacts() {
            match self.query_one(&contact, transport) {
                Ok(_) => {}
                Err(e) if e.is_retryable() => incomplete = true,
                Err(e) => return Err(e),
            }
        }
        Ok(DiscoveryOutput { discovered: self.discovered(), incomplete })
    }

    /// Full static run. `between_phases` blocks until the server has moved
    /// to the query phase.
    pub fn run_static(
        &mut self,
        transport: &dyn Transport,
        between_phases: impl FnOnce() -> Result<()>,
    ) -> Result<DiscoveryOutput> {
        let failed = self.submit_all(transport)?;
        between_phases()?;
        let mut out = self.query_all(transport)?;
        out.incomplete |= failed > 0;
        Ok(out)
    }

    /// One dynamic-mode query for `contact`; the server stores the tuple.
    pub fn run_dynamic_step(&mut self, contact: &Identity, transport: &dyn Transport) -> Result<bool> {
        self.query_one(contact, transport)
    }

    /// Queries every contact not yet discovered.
    pub fn dynamic_round(&mut self, transport: &dyn Transport) -> Result<DiscoveryOutput> {
        let mut incomplete = false;
        for contact in self.shuffled_contacts() {
            if self.discovered.contains_key(&contact) {
                continue;
            }
            match self.run_dynamic_step(&contact, transport) {
                Ok(_) => {}
                Err(e) if e.is_retryable() => incomplete = true,
                Err(e) => return Err(e),
            }
        }
        Ok(DiscoveryOutput { discovered: self.discovered(), incomplete })
    }

    /// Drops `contact` locally and asks the server to delete its tuple.
    pub fn delete_contact(&mut self, contact: &Identity, transport: &dyn Transport) -> Result<()> {
        let tuple = self.make_delete(contact)?;
        transport.exchange(&Request::delete(&tuple))?.into_result()?;
        self.contacts.remove(contact);
        self.discovered.remove(contact);
        Ok(())
    }

    pub fn report(&self, mode: DiscoveryMode, incomplete: bool) -> DiscoveryReport {
        DiscoveryReport {
            identity: self.identity.clone(),
            discovered: self.discovered.keys().cloned().collect(),
            mode,
            incomplete,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authority::{setup, Authority, SecurityProfile};
    use crate::crypto::{GroupSuite, TransparentGroup};
    use crate::enrollment::EnrollmentRegistry;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn id(s: &str) -> Identity {
        Identity::new(s).unwrap()
    }

    fn universe(n: usize) -> Vec<Identity> {
        (0..n).map(|i| id(&format!("+3161000{i:04}"))).collect()
    }

    fn authority() -> Authority {
        setup(SecurityProfile::Test, GroupSuite::Transparent(TransparentGroup::large()), Some([11; 32])).unwrap()
    }

    fn member(auth: &Authority, me: &Identity, visible: &[&Identity], hidden: &[&Identity]) -> MemberState {
        let cert = auth.issue_certificate(me, &auth.registry().secret_for(me)).unwrap();
        let contacts =
            ContactList::new(me, visible.iter().map(|i| (*i).clone()), hidden.iter().map(|i| (*i).clone())).unwrap();
        let mut m = MemberState::new(Arc::new(auth.params().clone()), cert, contacts).unwrap();
        m.seed_rng(1);
        m
    }

    #[test]
    fn contact_list_invariants() {
        let me = id("me");
        assert!(matches!(ContactList::new(&me, [me.clone()], []), Err(Error::SelfContact)));
        assert!(ContactList::new(&me, [id("a")], [id("a")]).is_err());
        let l = ContactList::new(&me, [id("a"), id("a"), id("b")], [id("c")]).unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l.all(), vec![id("a"), id("b"), id("c")]);
    }

    #[test]
    fn tokens_are_symmetric_over_all_pairs() {
        let auth = authority();
        let ids = universe(30);
        let mut members: Vec<_> = ids
            .iter()
            .map(|me| {
                let others: Vec<_> = ids.iter().filter(|o| *o != me).collect();
                member(&auth, me, &others, &[])
            })
            .collect();
        for a in 0..ids.len() {
            for b in 0..ids.len() {
                if a == b {
                    continue;
                }
                let ab = members[a].compute_token(&ids[b]).unwrap();
                let ba = members[b].compute_token(&ids[a]).unwrap();
                assert_eq!(ab, ba);
            }
        }
    }

    #[test]
    fn token_exponent_on_q101() {
        let suite = GroupSuite::transparent(101).unwrap();
        let reg = EnrollmentRegistry::generate(&mut ChaCha20Rng::seed_from_u64(0));
        let auth = Authority::with_master_scalar(suite, &suite.scalar_from_u64(3).unwrap(), reg).unwrap();
        let with_exp = |e: u64| {
            (0..10_000)
                .map(|i| id(&format!("u{i}")))
                .find(|i| suite.hash_to_slot(i, Slot::Slot1).unwrap().transparent_exponent() == Some(e))
                .unwrap()
        };
        let a = with_exp(2);
        let b = with_exp(5);
        let mut ma = member(&auth, &a, &[&b], &[]);
        assert_eq!(ma.compute_token(&b).unwrap().transparent_exponent(), Some(30));
        assert!(matches!(ma.compute_token(&a), Err(Error::SelfContact)));
    }

    #[test]
    fn mutual_submissions_share_first_component() {
        let auth = authority();
        let (a, m) = (id("alice"), id("mallory"));
        let mut ma = member(&auth, &a, &[&m], &[]);
        let mut mm = member(&auth, &m, &[&a], &[]);
        let sa = ma.make_submission(&m).unwrap();
        let sm = mm.make_submission(&a).unwrap();
        assert_eq!(sa.first, sm.first);
        let (qa, expected_a) = ma.make_query(&m).unwrap();
        let (_, expected_m) = mm.make_query(&a).unwrap();
        assert_eq!(qa, sa);
        assert_eq!(expected_a, sm.second);
        assert_eq!(expected_m, sa.second);
        assert_ne!(expected_a, qa.second);
    }

    #[test]
    fn hidden_contact_randomizes_second_only() {
        let auth = authority();
        let (h, p) = (id("hider"), id("partner"));
        let mut mh = member(&auth, &h, &[], &[&p]);
        let s1 = mh.make_submission(&p).unwrap();
        let s2 = mh.make_submission(&p).unwrap();
        let (query, _) = mh.make_query(&p).unwrap();
        assert_eq!(s1.first, query.first);
        assert_ne!(s1.second, query.second);
        assert_ne!(s1.second, s2.second);
    }

    #[test]
    fn tuple_components_are_pairwise_distinct_across_contacts() {
        let auth = authority();
        let ids = universe(30);
        let me = &ids[0];
        let others: Vec<_> = ids[1..].iter().collect();
        let mut m = member(&auth, me, &others, &[]);
        let mut seen = std::collections::HashSet::new();
        for c in &ids[1..] {
            let t = m.make_submission(c).unwrap();
            assert!(seen.insert(t.first));
            assert!(seen.insert(t.second));
        }
    }

    #[test]
    fn unknown_contact_is_rejected() {
        let auth = authority();
        let mut m = member(&auth, &id("a"), &[&id("b")], &[]);
        assert!(matches!(m.make_submission(&id("z")), Err(Error::UnknownContact(_))));
        assert!(matches!(m.make_query(&id("z")), Err(Error::UnknownContact(_))));
        assert!(m.make_delete(&id("z")).is_ok());
        assert!(matches!(m.derive_directory_access_token(&id("b")), Err(Error::NotDiscovered(_))));
    }

    #[test]
    fn response_processing() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let expected = AugmentedToken::random(&mut rng);
        assert!(!process_query_response(&expected, &[]));
        let noise: Vec<_> = (0..10_000)
            .map(|_| TuplePair::new(AugmentedToken::random(&mut rng), AugmentedToken::random(&mut rng)))
            .collect();
        assert!(!process_query_response(&expected, &noise));
        let mut with_hit = noise;
        with_hit.push(TuplePair::new(AugmentedToken::random(&mut rng), expected));
        assert!(process_query_response(&expected, &with_hit));
    }

    struct Counting(AtomicUsize);

    impl Transport for Counting {
        fn exchange(&self, _: &Request) -> Result<Response> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Response::ok())
        }
    }

    #[test]
    fn empty_contact_list_sends_nothing() {
        let auth = authority();
        let mut m = member(&auth, &id("lonely"), &[], &[]);
        let t = Counting(AtomicUsize::new(0));
        let out = m.run_static(&t, || Ok(())).unwrap();
        assert!(out.discovered.is_empty());
        assert_eq!(t.0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn forged_certificate_is_refused() {
        let auth = authority();
        let me = id("me");
        let mut cert = auth.issue_certificate(&me, &auth.registry().secret_for(&me)).unwrap();
        cert.identity = id("someone-else");
        let contacts = ContactList::new(&cert.identity, [], []).unwrap();
        assert!(MemberState::new(Arc::new(auth.params().clone()), cert, contacts).is_err());
    }
}
