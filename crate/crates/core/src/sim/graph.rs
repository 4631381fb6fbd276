use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::client::ContactList;
use crate::crypto::Identity;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    pub n_identities: usize,
    pub n_members: usize,
    /// Probability of each directed edge before the mutual boost.
    pub edge_prob: Option<f64>,
    /// Mean out-degree; converted to an edge probability.
    pub degree_target: Option<f64>,
    /// Probability that a one-way edge also gets its reverse.
    pub mutual_bias: f64,
    /// Probability that a member marks a given contact hidden.
    pub hide_prob: f64,
    /// Restrict identities to members, so every contact is a member.
    pub members_only: bool,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            n_identities: 60,
            n_members: 30,
            edge_prob: None,
            degree_target: Some(6.0),
            mutual_bias: 0.5,
            hide_prob: 0.0,
            members_only: false,
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.n_members > self.n_identities {
            return bad("n_members exceeds n_identities");
        }
        if self.members_only && self.n_members != self.n_identities {
            return bad("members_only requires n_members = n_identities");
        }
        for (name, p) in [("mutual_bias", self.mutual_bias), ("hide_prob", self.hide_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        match (self.edge_prob, self.degree_target) {
            (Some(p), None) if (0.0..=1.0).contains(&p) => Ok(()),
            (Some(_), None) => bad("edge_prob must lie in [0, 1]"),
            (None, Some(d)) if d >= 0.0 && d <= self.n_identities.saturating_sub(1) as f64 => Ok(()),
            (None, Some(_)) => bad("degree_target must lie in [0, n_identities - 1]"),
            _ => bad("give exactly one of edge_prob and degree_target"),
        }
    }

    /// Edge probability `p` with expected out-degree `(n-1)(p + p(1-p)b) = d`.
    pub fn resolved_edge_prob(&self) -> f64 {
        if let Some(p) = self.edge_prob {
            return p;
        }
        let d = self.degree_target.unwrap_or(0.0);
        let n1 = self.n_identities.saturating_sub(1) as f64;
        if n1 == 0.0 {
            return 0.0;
        }
        let target = d / n1;
        let b = self.mutual_bias;
        if b == 0.0 {
            return target.min(1.0);
        }
        // b p^2 - (1 + b) p + target = 0, smaller root.
        let disc = (1.0 + b).powi(2) - 4.0 * b * target;
        (((1.0 + b) - disc.max(0.0).sqrt()) / (2.0 * b)).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialGraph {
    pub identities: Vec<Identity>,
    pub out: BTreeMap<Identity, BTreeSet<Identity>>,
    pub members: BTreeSet<Identity>,
    pub hidden_marks: BTreeMap<Identity, BTreeSet<Identity>>,
}

pub fn identity_name(i: usize) -> Identity {
    Identity::new(&format!("+1555{i:07}")).expect("generated identities are valid")
}

impl SocialGraph {
    pub fn empty(identities: Vec<Identity>, members: BTreeSet<Identity>) -> Self {
        let out = identities.iter().map(|i| (i.clone(), BTreeSet::new())).collect();
        SocialGraph { identities, out, members, hidden_marks: BTreeMap::new() }
    }

    pub fn contacts(&self, id: &Identity) -> &BTreeSet<Identity> {
        static EMPTY: BTreeSet<Identity> = BTreeSet::new();
        self.out.get(id).unwrap_or(&EMPTY)
    }

    pub fn has_edge(&self, from: &Identity, to: &Identity) -> bool {
        self.contacts(from).contains(to)
    }

    pub fn is_hidden(&self, by: &Identity, contact: &Identity) -> bool {
        self.hidden_marks.get(by).is_some_and(|h| h.contains(contact))
    }

    pub fn add_edge(&mut self, from: Identity, to: Identity) {
        assert_ne!(from, to, "no self edges");
        self.out.entry(from).or_default().insert(to);
    }

    pub fn remove_edge(&mut self, from: &Identity, to: &Identity) {
        if let Some(s) = self.out.get_mut(from) {
            s.remove(to);
        }
        if let Some(h) = self.hidden_marks.get_mut(from) {
            h.remove(to);
        }
    }

    pub fn hide(&mut self, by: &Identity, contact: &Identity) {
        assert!(self.has_edge(by, contact), "hidden marks must be contacts");
        self.hidden_marks.entry(by.clone()).or_default().insert(contact.clone());
    }

    pub fn contact_list(&self, id: &Identity) -> Result<ContactList> {
        let hidden = self.hidden_marks.get(id).cloned().unwrap_or_default();
        let visible: Vec<_> = self.contacts(id).iter().filter(|c| !hidden.contains(*c)).cloned().collect();
        ContactList::new(id, visible, hidden)
    }

    pub fn edge_count(&self) -> usize {
        self.out.values().map(BTreeSet::len).sum()
    }

    /// Members in ascending order.
    pub fn member_list(&self) -> Vec<Identity> {
        self.members.iter().cloned().collect()
    }
}

pub fn gen_graph(params: &GraphParams, seed: u64) -> Result<SocialGraph> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let identities: Vec<_> = (0..params.n_identities).map(identity_name).collect();
    let mut shuffled = identities.clone();
    shuffled.shuffle(&mut rng);
    let members: BTreeSet<_> = shuffled.into_iter().take(params.n_members).collect();
    let mut graph = SocialGraph::empty(identities.clone(), members);

    let p = params.resolved_edge_prob();
    let n = identities.len();
    for i in 0..n {
        for j in i + 1..n {
            let mut forward = rng.gen_bool(p);
            let mut backward = rng.gen_bool(p);
            if forward != backward && rng.gen_bool(params.mutual_bias) {
                forward = true;
                backward = true;
            }
            if forward {
                graph.add_edge(identities[i].clone(), identities[j].clone());
            }
            if backward {
                graph.add_edge(identities[j].clone(), identities[i].clone());
            }
        }
    }
    if params.hide_prob > 0.0 {
        for m in graph.member_list() {
            for c in graph.contacts(&m).clone() {
                if rng.gen_bool(params.hide_prob) {
                    graph.hide(&m, &c);
                }
            }
        }
    }
    Ok(graph)
}
