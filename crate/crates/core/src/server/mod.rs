//! The matching server: stores submitted tuples and answers match queries,
//! either in two static phases or in always-on dynamic mode.

mod persist;
mod store;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use persist::{read_log, OpLog};
pub use store::{ServerStats, TupleStore};

use crate::crypto::{AugmentedToken, TuplePair};
use crate::error::{Error, Result};
use crate::wire::{ErrorCode, Request, Response, Service};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Submission,
    Query,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServerMode {
    Static(Phase),
    Dynamic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    #[default]
    Static,
    Dynamic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Certificate/pairing tuples (also used by the key-server variant).
    #[default]
    Main,
    /// Single KDF tokens with boolean membership answers.
    Simple,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ServerConfig {
    pub mode: ModeKind,
    pub variant: Variant,
    /// Answer every query with exactly one tuple, random when nothing matches.
    pub pad_responses: bool,
    /// Requests per second across all connections; `None` disables limiting.
    pub rate_limit: Option<u32>,
    pub log: Option<PathBuf>,
}

struct Bucket {
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl Bucket {
    fn new(rate: u32) -> Self {
        Bucket { capacity: rate as f64, tokens: rate as f64, last: Instant::now() }
    }

    fn take(&mut self) -> bool {
        let now = Instant::now();
        let refill = now.duration_since(self.last).as_secs_f64() * self.capacity;
        self.tokens = (self.tokens + refill).min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

struct State {
    mode: ServerMode,
    store: TupleStore,
    simple: HashSet<AugmentedToken>,
    log: Option<OpLog>,
}

pub struct MatchingServer {
    config: ServerConfig,
    state: Mutex<State>,
    bucket: Option<Mutex<Bucket>>,
    filler: Mutex<ChaCha20Rng>,
}

impl MatchingServer {
    /// Creates the server, replaying its log first if one is configured.
    pub fn new(config: ServerConfig) -> Result<Self> {
        let mode = match config.mode {
            ModeKind::Static => ServerMode::Static(Phase::Submission),
            ModeKind::Dynamic => ServerMode::Dynamic,
        };
        let mut state = State { mode, store: TupleStore::new(), simple: HashSet::new(), log: None };
        if let Some(path) = &config.log {
            for (i, record) in read_log(path)?.into_iter().enumerate() {
                if !is_mutating(&record) {
                    return Err(Error::CorruptLog {
                        line: i + 1,
                        reason: format!("unexpected op {}", record.op_name()),
                    });
                }
                if let Err(code) = apply(&config, &mut state, record) {
                    return Err(Error::CorruptLog { line: i + 1, reason: format!("replay rejected: {code:?}") });
                }
            }
            state.log = Some(OpLog::open(path)?);
        }
        Ok(MatchingServer {
            bucket: config.rate_limit.map(|r| Mutex::new(Bucket::new(r))),
            config,
            state: Mutex::new(state),
            filler: Mutex::new(ChaCha20Rng::from_entropy()),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn mode(&self) -> ServerMode {
        self.state.lock().unwrap().mode
    }

    pub fn stats(&self) -> ServerStats {
        let state = self.state.lock().unwrap();
        match self.config.variant {
            Variant::Main => state.store.stats(),
            Variant::Simple => ServerStats { s_c: state.simple.len() as u64, s_mc: 0 },
        }
    }

    pub fn advance_phase(&self) -> Result<()> {
        self.handle(Request::AdvancePhase).into_result().map(|_| ())
    }

    /// Every stored tuple, sorted.
    pub fn tuples(&self) -> Vec<TuplePair> {
        let mut all: Vec<_> = self.state.lock().unwrap().store.iter().collect();
        all.sort();
        all
    }

    fn pad(&self, mut matches: Vec<TuplePair>) -> Vec<TuplePair> {
        if matches.is_empty() {
            let mut rng = self.filler.lock().unwrap();
            vec![TuplePair::new(AugmentedToken::random(&mut *rng), AugmentedToken::random(&mut *rng))]
        } else {
            matches.truncate(1);
            matches
        }
    }
}

fn is_mutating(request: &Request) -> bool {
    matches!(
        request,
        Request::Submit { .. }
            | Request::Query { .. }
            | Request::Delete { .. }
            | Request::AdvancePhase
            | Request::SimpleSubmit { .. }
    )
}

/// Applies one request to the state. Shared by live handling and replay.
fn apply(config: &ServerConfig, state: &mut State, request: Request) -> std::result::Result<Response, ErrorCode> {
    use Phase::*;
    use ServerMode::*;
    let main = config.variant == Variant::Main;
    match request {
        Request::Submit { t1, t2 } if main => match state.mode {
            Static(Submission) => {
                state.store.insert(TuplePair::new(t1, t2));
                Ok(Response::ok())
            }
            Static(Query) => Err(ErrorCode::Phase),
            Dynamic => Err(ErrorCode::Mode),
        },
        Request::Query { t1, t2 } if main => {
            let t = TuplePair::new(t1, t2);
            match state.mode {
                Static(Query) => Ok(Response::Matches { matches: state.store.matches(&t) }),
                Static(Submission) => Err(ErrorCode::Phase),
                Dynamic => {
                    state.store.insert(t);
                    Ok(Response::Matches { matches: state.store.matches(&t) })
                }
            }
        }
        Request::Delete { t1, t2 } if main => match state.mode {
            Dynamic => {
                state.store.remove(&TuplePair::new(t1, t2));
                Ok(Response::ok())
            }
            Static(_) => Err(ErrorCode::Mode),
        },
        Request::SimpleSubmit { t } if !main => match state.mode {
            Static(Submission) => {
                state.simple.insert(t);
                Ok(Response::ok())
            }
            Static(Query) => Err(ErrorCode::Phase),
            Dynamic => Err(ErrorCode::Mode),
        },
        Request::SimpleQuery { t } if !main => match state.mode {
            Static(Query) => Ok(Response::Present { present: state.simple.contains(&t) }),
            Static(Submission) => Err(ErrorCode::Phase),
            Dynamic => Err(ErrorCode::Mode),
        },
        Request::AdvancePhase => match state.mode {
            Static(Submission) => {
                state.mode = Static(Query);
                Ok(Response::ok())
            }
            Static(Query) => Err(ErrorCode::Phase),
            Dynamic => Err(ErrorCode::Mode),
        },
        Request::Stats => Ok(match config.variant {
            Variant::Main => {
                let s = state.store.stats();
                Response::Stats { s_c: s.s_c, s_mc: s.s_mc }
            }
            Variant::Simple => Response::Stats { s_c: state.simple.len() as u64, s_mc: 0 },
        }),
        _ => Err(ErrorCode::Mode),
    }
}

impl Service for MatchingServer {
    fn handle(&self, request: Request) -> Response {
        if let Some(bucket) = &self.bucket {
            if !bucket.lock().unwrap().take() {
                return Response::err(ErrorCode::Rate);
            }
        }
        let record = is_mutating(&request).then(|| request.clone());
        let mut state = self.state.lock().unwrap();
        let response = match apply(&self.config, &mut state, request) {
            Ok(r) => r,
            Err(code) => return Response::err(code),
        };
        if let (Some(record), Some(log)) = (record, state.log.as_mut()) {
            if let Err(e) = log.append(&record) {
                // The operation is applied in memory but not durable; say so.
                eprintln!("matching server: log append to {} failed: {e}", log.path().display());
                return Response::err(ErrorCode::Internal);
            }
        }
        drop(state);
        match response {
            Response::Matches { matches } if self.config.pad_responses => {
                Response::Matches { matches: self.pad(matches) }
            }
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(b: u8) -> AugmentedToken {
        AugmentedToken::from_bytes([b; 32])
    }

    fn pair(a: u8, b: u8) -> TuplePair {
        TuplePair::new(tok(a), tok(b))
    }

    fn server(mode: ModeKind) -> MatchingServer {
        MatchingServer::new(ServerConfig { mode, ..Default::default() }).unwrap()
    }

    fn matches(s: &MatchingServer, t: TuplePair) -> Vec<TuplePair> {
        match s.handle(Request::query(&t)) {
            Response::Matches { matches } => matches,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn static_phases() {
        let s = server(ModeKind::Static);
        assert_eq!(s.handle(Request::query(&pair(1, 2))), Response::err(ErrorCode::Phase));
        assert_eq!(s.handle(Request::submit(&pair(1, 2))), Response::ok());
        assert_eq!(s.handle(Request::submit(&pair(1, 2))), Response::ok());
        assert_eq!(s.stats().s_c, 1);
        s.handle(Request::submit(&pair(1, 3)));
        s.handle(Request::submit(&pair(4, 5)));
        assert_eq!(s.handle(Request::delete(&pair(1, 2))), Response::err(ErrorCode::Mode));
        s.advance_phase().unwrap();
        assert!(matches!(s.advance_phase(), Err(Error::Server(ErrorCode::Phase))));
        assert_eq!(s.handle(Request::submit(&pair(7, 7))), Response::err(ErrorCode::Phase));
        assert_eq!(matches(&s, pair(1, 2)), vec![pair(1, 3)]);
        assert_eq!(matches(&s, pair(1, 3)), vec![pair(1, 2)]);
        assert!(matches(&s, pair(4, 5)).is_empty());
        assert_eq!(s.stats(), ServerStats { s_c: 3, s_mc: 2 });
        assert_eq!(s.handle(Request::SimpleQuery { t: tok(1) }), Response::err(ErrorCode::Mode));
    }

    #[test]
    fn dynamic_query_inserts_then_matches() {
        let s = server(ModeKind::Dynamic);
        assert!(matches(&s, pair(1, 2)).is_empty());
        assert_eq!(matches(&s, pair(1, 3)), vec![pair(1, 2)]);
        assert_eq!(matches(&s, pair(1, 2)), vec![pair(1, 3)]);
        assert_eq!(s.handle(Request::delete(&pair(1, 3))), Response::ok());
        assert_eq!(s.handle(Request::delete(&pair(9, 9))), Response::ok());
        assert!(matches(&s, pair(1, 2)).is_empty());
        assert_eq!(matches(&s, pair(1, 3)), vec![pair(1, 2)]);
        assert_eq!(s.handle(Request::submit(&pair(1, 2))), Response::err(ErrorCode::Mode));
        assert_eq!(s.handle(Request::AdvancePhase), Response::err(ErrorCode::Mode));
    }

    #[test]
    fn padded_responses_have_exactly_one_tuple() {
        let s = MatchingServer::new(ServerConfig { pad_responses: true, ..Default::default() }).unwrap();
        s.handle(Request::submit(&pair(1, 2)));
        s.handle(Request::submit(&pair(1, 3)));
        s.advance_phase().unwrap();
        assert_eq!(matches(&s, pair(1, 2)), vec![pair(1, 3)]);
        let filler = matches(&s, pair(8, 8));
        assert_eq!(filler.len(), 1);
        assert_ne!(filler[0].first, tok(8));
    }

    #[test]
    fn simple_variant() {
        let s = MatchingServer::new(ServerConfig { variant: Variant::Simple, ..Default::default() }).unwrap();
        assert_eq!(s.handle(Request::SimpleSubmit { t: tok(1) }), Response::ok());
        assert_eq!(s.handle(Request::submit(&pair(1, 2))), Response::err(ErrorCode::Mode));
        s.advance_phase().unwrap();
        assert_eq!(s.handle(Request::SimpleQuery { t: tok(1) }), Response::Present { present: true });
        assert_eq!(s.handle(Request::SimpleQuery { t: tok(2) }), Response::Present { present: false });
        assert_eq!(s.stats(), ServerStats { s_c: 1, s_mc: 0 });
    }

    #[test]
    fn rate_limit_rejects_bursts() {
        let s = MatchingServer::new(ServerConfig { rate_limit: Some(3), ..Default::default() }).unwrap();
        let codes: Vec<_> = (0..10).map(|_| s.handle(Request::Stats)).collect();
        assert!(codes.contains(&Response::err(ErrorCode::Rate)));
        assert!(codes[0] != Response::err(ErrorCode::Rate));
    }

    #[test]
    fn log_replay_restores_store() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("ops.log");
        let config = ServerConfig { mode: ModeKind::Dynamic, log: Some(log.clone()), ..Default::default() };
        let s = MatchingServer::new(config.clone()).unwrap();
        matches(&s, pair(1, 2));
        matches(&s, pair(1, 3));
        matches(&s, pair(4, 4));
        s.handle(Request::delete(&pair(4, 4)));
        s.handle(Request::Stats);
        let before = (s.stats(), s.tuples());
        drop(s);
        let restored = MatchingServer::new(config.clone()).unwrap();
        assert_eq!((restored.stats(), restored.tuples()), before);
        assert_eq!(before.1, vec![pair(1, 2), pair(1, 3)]);
        drop(restored);

        let text = std::fs::read_to_string(&log).unwrap();
        assert_eq!(text.lines().count(), 4);
        std::fs::write(&log, &text[..text.len() - 5]).unwrap();
        match MatchingServer::new(config.clone()) {
            Err(Error::CorruptLog { line: 4, .. }) => {}
            Err(other) => panic!("unexpected error {other}"),
            Ok(_) => panic!("truncated log accepted"),
        }
        std::fs::write(&log, "{\"op\":\"stats\"}\n").unwrap();
        assert!(matches!(MatchingServer::new(config), Err(Error::CorruptLog { line: 1, .. })));
    }

    #[test]
    fn static_log_replays_phase() {
        let dir = tempfile::tempdir().unwrap();
        let config = ServerConfig { log: Some(dir.path().join("ops.log")), ..Default::default() };
        let s = MatchingServer::new(config.clone()).unwrap();
        s.handle(Request::submit(&pair(1, 2)));
        s.advance_phase().unwrap();
        drop(s);
        let s = MatchingServer::new(config).unwrap();
        assert_eq!(s.mode(), ServerMode::Static(Phase::Query));
        assert_eq!(s.stats().s_c, 1);
    }
}
