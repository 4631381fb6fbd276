use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::Identity;
use crate::server::ServerStats;
use crate::sim::graph::SocialGraph;

/// Ground truth as a trusted third party seeing every contact list would
/// compute it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleExpectation {
    pub out: BTreeMap<Identity, BTreeSet<Identity>>,
    /// Tuples submitted in total (one per contact of each member).
    pub s_c: u64,
    /// Twice the number of unordered mutual member pairs, hidden or not.
    pub s_mc: u64,
}

/// `M` discovers `X` iff `X` is a member, each lists the other, and `X` did
/// not mark `M` hidden.
pub fn ideal_oracle(graph: &SocialGraph) -> OracleExpectation {
    let mut out = BTreeMap::new();
    let mut s_c = 0;
    let mut mutual = 0;
    for m in &graph.members {
        let contacts = graph.contacts(m);
        s_c += contacts.len() as u64;
        let mut found = BTreeSet::new();
        for x in contacts {
            if !graph.members.contains(x) || !graph.has_edge(x, m) {
                continue;
            }
            if m < x {
                mutual += 1;
            }
            if !graph.is_hidden(x, m) {
                found.insert(x.clone());
            }
        }
        out.insert(m.clone(), found);
    }
    OracleExpectation { out, s_c, s_mc: 2 * mutual }
}

impl OracleExpectation {
    pub fn stats(&self) -> ServerStats {
        ServerStats { s_c: self.s_c, s_mc: self.s_mc }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::graph::{gen_graph, identity_name, GraphParams};

    fn id(i: usize) -> Identity {
        identity_name(i)
    }

    #[test]
    fn mutual_pair() {
        let mut g = SocialGraph::empty(vec![id(0), id(1)], [id(0), id(1)].into());
        g.add_edge(id(0), id(1));
        g.add_edge(id(1), id(0));
        let o = ideal_oracle(&g);
        assert_eq!(o.out[&id(0)], [id(1)].into());
        assert_eq!(o.out[&id(1)], [id(0)].into());
        assert_eq!((o.s_c, o.s_mc), (2, 2));

        g.hide(&id(0), &id(1));
        let o = ideal_oracle(&g);
        assert_eq!(o.out[&id(0)], [id(1)].into());
        assert!(o.out[&id(1)].is_empty());
        assert_eq!((o.s_c, o.s_mc), (2, 2));
    }

    #[test]
    fn triangle_counts() {
        let ids: Vec<_> = (0..3).map(id).collect();
        let mut g = SocialGraph::empty(ids.clone(), ids.iter().cloned().collect());
        for a in &ids {
            for b in &ids {
                if a != b {
                    g.add_edge(a.clone(), b.clone());
                }
            }
        }
        assert_eq!(ideal_oracle(&g).s_mc, 6);
    }

    /// Second implementation of the discovery predicate, written over
    /// explicit edge sets rather than the graph helpers.
    fn brute_force(graph: &SocialGraph) -> BTreeMap<Identity, BTreeSet<Identity>> {
        let edges: BTreeSet<(Identity, Identity)> =
            graph.out.iter().flat_map(|(a, bs)| bs.iter().map(move |b| (a.clone(), b.clone()))).collect();
        let hidden: BTreeSet<(Identity, Identity)> =
            graph.hidden_marks.iter().flat_map(|(a, bs)| bs.iter().map(move |b| (a.clone(), b.clone()))).collect();
        let mut result = BTreeMap::new();
        for m in &graph.identities {
            if !graph.members.contains(m) {
                continue;
            }
            let mut set = BTreeSet::new();
            for x in &graph.identities {
                let pair = (m.clone(), x.clone());
                let back = (x.clone(), m.clone());
                if edges.contains(&pair)
                    && edges.contains(&back)
                    && graph.members.contains(x)
                    && !hidden.contains(&back)
                {
                    set.insert(x.clone());
                }
            }
            result.insert(m.clone(), set);
        }
        result
    }

    #[test]
    fn agrees_with_brute_force_on_random_graphs() {
        for seed in 0..20 {
            let p = GraphParams {
                n_identities: 30,
                n_members: 20,
                degree_target: Some(8.0),
                hide_prob: 0.2,
                ..Default::default()
            };
            let g = gen_graph(&p, seed).unwrap();
            assert_eq!(ideal_oracle(&g).out, brute_force(&g), "seed {seed}");
        }
    }
}
