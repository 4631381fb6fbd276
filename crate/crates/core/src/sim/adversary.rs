//! A matching server that lies.

use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{AugmentedToken, TuplePair};
use crate::wire::{Request, Response, Service};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryParams {
    /// Total fabricated tuples to add to query responses over the run.
    pub inject: u64,
    /// Tuples added per query response until the budget is spent.
    pub per_query: u64,
    /// Number of genuine matches to suppress.
    pub drop: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryCounters {
    pub injected: u64,
    pub dropped: u64,
}

struct Tamper {
    rng: ChaCha20Rng,
    counters: AdversaryCounters,
    seen_firsts: Vec<AugmentedToken>,
    seen_seconds: Vec<AugmentedToken>,
}

/// Forwards to an honest server, then tampers with query responses: adds
/// random tuples, tuples grafting the queried first component onto random or
/// previously observed second components, and whole observed tuples; and
/// suppresses up to `drop` genuine matches.
pub struct MaliciousServer<S> {
    inner: S,
    params: AdversaryParams,
    tamper: Mutex<Tamper>,
}

impl<S: Service> MaliciousServer<S> {
    pub fn new(inner: S, params: AdversaryParams, seed: u64) -> Self {
        MaliciousServer {
            inner,
            params,
            tamper: Mutex::new(Tamper {
                rng: ChaCha20Rng::seed_from_u64(seed),
                counters: AdversaryCounters::default(),
                seen_firsts: Vec::new(),
                seen_seconds: Vec::new(),
            }),
        }
    }

    pub fn counters(&self) -> AdversaryCounters {
        self.tamper.lock().unwrap().counters
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Service> Service for MaliciousServer<S> {
    fn handle(&self, request: Request) -> Response {
        let query = match &request {
            Request::Query { t1, t2 } => Some(TuplePair::new(*t1, *t2)),
            Request::Submit { t1, t2 } => {
                let mut t = self.tamper.lock().unwrap();
                t.seen_firsts.push(*t1);
                t.seen_seconds.push(*t2);
                None
            }
            _ => None,
        };
        let response = self.inner.handle(request);
        let (Some(q), Response::Matches { mut matches }) = (query, response.clone()) else {
            return response;
        };
        let mut guard = self.tamper.lock().unwrap();
        let t = &mut *guard;
        let mut suppressed = Vec::new();
        if !matches.is_empty() && t.counters.dropped < self.params.drop {
            suppressed = std::mem::take(&mut matches);
            t.counters.dropped += 1;
        }
        let budget = self.params.inject - t.counters.injected;
        for i in 0..self.params.per_query.min(budget) {
            let random = AugmentedToken::random(&mut t.rng);
            let fake = match i % 4 {
                0 => TuplePair::new(AugmentedToken::random(&mut t.rng), random),
                1 => TuplePair::new(q.first, random),
                2 => TuplePair::new(q.first, t.seen_seconds.choose(&mut t.rng).copied().unwrap_or(random)),
                _ => TuplePair::new(
                    t.seen_firsts.choose(&mut t.rng).copied().unwrap_or(random),
                    t.seen_seconds.choose(&mut t.rng).copied().unwrap_or(random),
                ),
            };
            // Echoing a suppressed second component would undo the drop.
            let fake = if suppressed.iter().any(|s| s.second == fake.second) {
                TuplePair::new(fake.first, random)
            } else {
                fake
            };
            matches.push(fake);
            t.counters.injected += 1;
        }
        matches.shuffle(&mut t.rng);
        Response::Matches { matches }
    }
}
