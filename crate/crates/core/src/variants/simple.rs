//! KDF-based variant: directional tokens `KDF(A‖M)` are submitted and
//! `KDF(M‖A)` queried. Any party able to evaluate the KDF can test whether
//! `A ∈ contacts(B)`; [`attack_contact_probe`] does exactly that.

use std::collections::BTreeSet;

use crate::client::{ContactList, DiscoveryOutput};
use crate::crypto::{concat_unambiguous, kdf, AugmentedToken, Identity, KdfParams};
use crate::error::{Error, Result};
use crate::net::Transport;
use crate::wire::{Request, Response};

pub const SIMPLE_KDF_DOMAIN: &[u8] = b"MCD-SIMPLE-KDF-v1";

/// A 256-bit KDF output; shares the hex64 wire form of augmented tokens.
pub type SimpleToken = AugmentedToken;

pub fn simple_token(a: &Identity, b: &Identity, params: &KdfParams) -> Result<SimpleToken> {
    if a == b {
        return Err(Error::SelfContact);
    }
    let input = concat_unambiguous(a.as_bytes(), b.as_bytes())?;
    Ok(AugmentedToken::from_bytes(kdf(&input, params)))
}

fn simple_submit(transport: &dyn Transport, t: SimpleToken) -> Result<()> {
    match transport.exchange(&Request::SimpleSubmit { t })? {
        Response::Ok { ok: true } => Ok(()),
        Response::Err { err } => Err(Error::Server(err)),
        _ => Err(Error::UnexpectedResponse),
    }
}

fn simple_query(transport: &dyn Transport, t: SimpleToken) -> Result<bool> {
    match transport.exchange(&Request::SimpleQuery { t })? {
        Response::Present { present } => Ok(present),
        Response::Err { err } => Err(Error::Server(err)),
        _ => Err(Error::UnexpectedResponse),
    }
}

pub struct SimpleMember {
    identity: Identity,
    contacts: ContactList,
    params: KdfParams,
    discovered: BTreeSet<Identity>,
}

impl SimpleMember {
    pub fn new(identity: Identity, contacts: ContactList, params: KdfParams) -> Result<Self> {
        if contacts.contains(&identity) {
            return Err(Error::SelfContact);
        }
        Ok(SimpleMember { identity, contacts, params, discovered: BTreeSet::new() })
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    /// Submits `KDF(A‖M)` for each visible contact `A`. Hidden contacts get
    /// nothing, so they never find the member.
    pub fn submit_all(&mut self, transport: &dyn Transport) -> Result<usize> {
        let mut failed = 0;
        for contact in self.contacts.visible().clone() {
            match simple_submit(transport, simple_token(&contact, &self.identity, &self.params)?) {
                Ok(()) => {}
                Err(e) if e.is_retryable() => failed += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(failed)
    }

    pub fn query_all(&mut self, transport: &dyn Transport) -> Result<DiscoveryOutput> {
        let mut incomplete = false;
        for contact in self.contacts.all() {
            match simple_query(transport, simple_token(&self.identity, &contact, &self.params)?) {
                Ok(true) => {
                    self.discovered.insert(contact);
                }
                Ok(false) => {}
                Err(e) if e.is_retryable() => incomplete = true,
                Err(e) => return Err(e),
            }
        }
        Ok(DiscoveryOutput { discovered: self.discovered.clone(), incomplete })
    }

    pub fn simple_run(
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
}

/// Tests whether `a ∈ contacts(b)` using nothing but public knowledge.
/// Succeeds whenever `b` took part in the submission phase.
pub fn attack_contact_probe(a: &Identity, b: &Identity, params: &KdfParams, transport: &dyn Transport) -> Result<bool> {
    simple_query(transport, simple_token(a, b, params)?)
}
