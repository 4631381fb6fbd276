use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::crypto::{AugmentedToken, TuplePair};

/// The tuple set `S`, indexed by first component.
///
/// `s_mc` is kept incrementally: a group of `k` tuples sharing a first
/// component contributes `k(k-1)` ordered pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TupleStore {
    index: HashMap<AugmentedToken, BTreeSet<AugmentedToken>>,
    len: u64,
    mutual_pairs: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerStats {
    pub s_c: u64,
    pub s_mc: u64,
}

impl TupleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true if the tuple was not already present.
    pub fn insert(&mut self, t: TuplePair) -> bool {
        let group = self.index.entry(t.first).or_default();
        let k = group.len() as u64;
        if !group.insert(t.second) {
            return false;
        }
        self.len += 1;
        self.mutual_pairs += 2 * k;
        true
    }

    /// Returns true if the tuple was present.
    pub fn remove(&mut self, t: &TuplePair) -> bool {
        let Some(group) = self.index.get_mut(&t.first) else {
            return false;
        };
        if !group.remove(&t.second) {
            return false;
        }
        let k = group.len() as u64;
        if group.is_empty() {
            self.index.remove(&t.first);
        }
        self.len -= 1;
        self.mutual_pairs -= 2 * k;
        true
    }

    pub fn contains(&self, t: &TuplePair) -> bool {
        self.index.get(&t.first).is_some_and(|g| g.contains(&t.second))
    }

    /// `{(x, y) ∈ S : x = t.first ∧ y ≠ t.second}`.
    pub fn matches(&self, t: &TuplePair) -> Vec<TuplePair> {
        self.index
            .get(&t.first)
            .map(|group| group.iter().filter(|s| **s != t.second).map(|s| TuplePair::new(t.first, *s)).collect())
            .unwrap_or_default()
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stats(&self) -> ServerStats {
        ServerStats { s_c: self.len, s_mc: self.mutual_pairs }
    }

    pub fn iter(&self) -> impl Iterator<Item = TuplePair> + '_ {
        self.index.iter().flat_map(|(f, g)| g.iter().map(move |s| TuplePair::new(*f, *s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(b: u8) -> AugmentedToken {
        AugmentedToken::from_bytes([b; 32])
    }

    fn pair(a: u8, b: u8) -> TuplePair {
        TuplePair::new(tok(a), tok(b))
    }

    fn naive_matches(all: &[TuplePair], t: &TuplePair) -> BTreeSet<TuplePair> {
        all.iter().filter(|s| s.first == t.first && s.second != t.second).copied().collect()
    }

    fn naive_stats(all: &[TuplePair]) -> ServerStats {
        let mut s_mc = 0;
        for u in all {
            for v in all {
                if u != v && u.first == v.first && u.second != v.second {
                    s_mc += 1;
                }
            }
        }
        ServerStats { s_c: all.len() as u64, s_mc }
    }

    #[test]
    fn small_cases() {
        let mut s = TupleStore::new();
        assert_eq!(s.stats(), ServerStats { s_c: 0, s_mc: 0 });
        assert!(s.insert(pair(1, 2)));
        assert!(!s.insert(pair(1, 2)));
        assert_eq!(s.len(), 1);
        assert!(s.matches(&pair(9, 9)).is_empty());
        s.insert(pair(1, 3));
        assert_eq!(s.stats(), ServerStats { s_c: 2, s_mc: 2 });
        assert_eq!(s.matches(&pair(1, 2)), vec![pair(1, 3)]);
        s.insert(pair(1, 4));
        let mut m = s.matches(&pair(1, 2));
        m.sort();
        assert_eq!(m, vec![pair(1, 3), pair(1, 4)]);
        assert_eq!(s.stats().s_mc, 6);
        assert!(s.remove(&pair(1, 3)));
        assert!(!s.remove(&pair(1, 3)));
        assert_eq!(s.stats(), ServerStats { s_c: 2, s_mc: 2 });
    }

    #[derive(Clone, Debug)]
    enum Op {
        Insert(u8, u8),
        Remove(u8, u8),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            3 => (0u8..8, 0u8..6).prop_map(|(a, b)| Op::Insert(a, b)),
            1 => (0u8..8, 0u8..6).prop_map(|(a, b)| Op::Remove(a, b)),
        ]
    }

    proptest! {
        #[test]
        fn stats_and_matches_agree_with_brute_force(ops in prop::collection::vec(op(), 0..200)) {
            let mut store = TupleStore::new();
            let mut naive: Vec<TuplePair> = Vec::new();
            for o in ops {
                match o {
                    Op::Insert(a, b) => {
                        store.insert(pair(a, b));
                        if !naive.contains(&pair(a, b)) { naive.push(pair(a, b)); }
                    }
                    Op::Remove(a, b) => {
                        store.remove(&pair(a, b));
                        naive.retain(|t| *t != pair(a, b));
                    }
                }
                prop_assert_eq!(store.stats(), naive_stats(&naive));
            }
            for a in 0..8 {
                for b in 0..6 {
                    let q = pair(a, b);
                    let got: BTreeSet<_> = store.matches(&q).into_iter().collect();
                    prop_assert_eq!(got, naive_matches(&naive, &q));
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn large_random_stores_match_full_scan(
            seeds in prop::collection::vec((any::<[u8; 4]>(), any::<[u8; 2]>()), 1..10_000),
            probe in any::<[u8; 4]>(),
        ) {
            // Short prefixes force heavy sharing of first components.
            let expand = |bytes: &[u8]| {
                let mut out = [0u8; 32];
                out[..bytes.len()].copy_from_slice(bytes);
                AugmentedToken::from_bytes(out)
            };
            let mut store = TupleStore::new();
            let mut all = Vec::new();
            for (f, s) in &seeds {
                let t = TuplePair::new(expand(&f[..1]), expand(s));
                if store.insert(t) { all.push(t); }
            }
            let q = TuplePair::new(expand(&probe[..1]), expand(&probe[1..3]));
            let got: BTreeSet<_> = store.matches(&q).into_iter().collect();
            prop_assert_eq!(got, naive_matches(&all, &q));
            prop_assert_eq!(store.len(), all.len() as u64);
        }
    }
}
