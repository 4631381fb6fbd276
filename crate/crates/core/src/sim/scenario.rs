//! Scenario definitions and the engine that runs them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::authority::{setup, Certificate, SecurityProfile, SystemParams};
use crate::client::{ContactList, Credential, DiscoveryOutput, MemberState};
use crate::crypto::{ordered_h2, AugmentedToken, GroupSuite, Identity, KdfParams, Slot, TransparentGroup, TuplePair};
use crate::directory::{dir_get, dir_put, KeyDirectory};
use crate::enrollment::EnrollmentRegistry;
use crate::error::{Error, Result};
use crate::net::{serve, InProcess, ServerHandle, TcpTransport, Transport};
use crate::server::{MatchingServer, ModeKind, ServerConfig, ServerStats, Variant};
use crate::sim::adversary::{AdversaryParams, MaliciousServer};
use crate::sim::graph::{gen_graph, GraphParams, SocialGraph};
use crate::sim::oracle::ideal_oracle;
use crate::sim::report::Report;
use crate::sim::transport::{scan_transcript, RecordingTransport};
use crate::variants::keyserver::{dh_token, enroll, fetch_key, DhKeyPair, KeyServer};
use crate::variants::simple::{attack_contact_probe, SimpleMember, SIMPLE_KDF_DOMAIN};
use crate::wire::{Request, Response, Service};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ScenarioName {
    HonestStatic,
    HonestDynamic,
    MaliciousServer,
    HidingMember,
    GuessingAttacker,
    Replay,
    SimpleWeakness,
    KeyserverRun,
    KeyserverCollusion,
    DirectoryE2e,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    #[default]
    Main,
    Simple,
    Keyserver,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SuiteChoice {
    #[default]
    Production,
    /// Toy pairing with known discrete logs; fast, never for real traffic.
    Transparent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    Socket,
}

/// A fully resolved scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: ScenarioName,
    pub seed: u64,
    pub graph: GraphParams,
    pub variant: ProtocolVariant,
    pub suite: SuiteChoice,
    pub transport: TransportKind,
    pub pad_responses: bool,
    /// Rebuild the matching server from its log between the phases.
    pub restart_from_log: bool,
    pub adversary: AdversaryParams,
    pub workers: usize,
    /// Dynamic mode: number of join waves and of contact deletions.
    pub waves: usize,
    pub deletions: usize,
    /// Fraction of members that hide every contact.
    pub hider_fraction: f64,
    /// Random-token directory fetches.
    pub random_probes: u64,
    /// Repeated key-server fetches per unenrolled identity.
    pub phantom_fetches: u64,
    pub record_transcript: bool,
}

impl Scenario {
    /// The default configuration for `name`.
    pub fn preset(name: ScenarioName, seed: u64) -> Self {
        let mut s = Scenario {
            name,
            seed,
            graph: GraphParams::default(),
            variant: ProtocolVariant::Main,
            suite: SuiteChoice::Production,
            transport: TransportKind::InProcess,
            pad_responses: false,
            restart_from_log: false,
            adversary: AdversaryParams::default(),
            workers: 4,
            waves: 0,
            deletions: 0,
            hider_fraction: 0.0,
            random_probes: 0,
            phantom_fetches: 0,
            record_transcript: true,
        };
        match name {
            ScenarioName::HonestStatic | ScenarioName::GuessingAttacker | ScenarioName::Replay => {}
            ScenarioName::HonestDynamic => {
                s.waves = 3;
                s.deletions = 3;
            }
            ScenarioName::MaliciousServer => {
                s.adversary = AdversaryParams { inject: 10_000, per_query: 0, drop: 0 };
            }
            ScenarioName::HidingMember => s.hider_fraction = 0.2,
            ScenarioName::SimpleWeakness => {
                s.variant = ProtocolVariant::Simple;
                s.graph = GraphParams { n_identities: 30, n_members: 30, members_only: true, ..GraphParams::default() };
            }
            ScenarioName::KeyserverRun => {
                s.variant = ProtocolVariant::Keyserver;
                s.phantom_fetches = 100;
            }
            ScenarioName::KeyserverCollusion => {
                s.variant = ProtocolVariant::Keyserver;
                s.graph =
                    GraphParams { n_identities: 20, n_members: 10, degree_target: Some(5.0), ..GraphParams::default() };
            }
            ScenarioName::DirectoryE2e => s.random_probes = 1_000,
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        self.graph.validate()?;
        if !(0.0..=1.0).contains(&self.hider_fraction) {
            return bad("hider_fraction must lie in [0, 1]");
        }
        let needs_main = matches!(
            self.name,
            ScenarioName::HonestDynamic
                | ScenarioName::MaliciousServer
                | ScenarioName::HidingMember
                | ScenarioName::GuessingAttacker
                | ScenarioName::Replay
                | ScenarioName::DirectoryE2e
        );
        if needs_main && self.variant != ProtocolVariant::Main {
            return bad("this scenario runs the main protocol only");
        }
        if self.name == ScenarioName::SimpleWeakness && self.variant != ProtocolVariant::Simple {
            return bad("simple_weakness requires the simple variant");
        }
        if matches!(self.name, ScenarioName::KeyserverRun | ScenarioName::KeyserverCollusion)
            && self.variant != ProtocolVariant::Keyserver
        {
            return bad("key-server scenarios require the keyserver variant");
        }
        if self.name == ScenarioName::HonestDynamic && self.waves == 0 {
            return bad("honest_dynamic needs at least one wave");
        }
        if self.name == ScenarioName::HonestDynamic && self.restart_from_log {
            return bad("restart_from_log applies to static runs");
        }
        Ok(())
    }
}

/// A scenario file: a preset name plus optional overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<ScenarioName>,
    pub seed: Option<u64>,
    pub graph: Option<GraphParams>,
    pub variant: Option<ProtocolVariant>,
    pub suite: Option<SuiteChoice>,
    pub transport: Option<TransportKind>,
    pub pad_responses: Option<bool>,
    pub restart_from_log: Option<bool>,
    pub adversary: Option<AdversaryParams>,
    pub workers: Option<usize>,
    pub waves: Option<usize>,
    pub deletions: Option<usize>,
    pub hider_fraction: Option<f64>,
    pub random_probes: Option<u64>,
    pub phantom_fetches: Option<u64>,
    pub record_transcript: Option<bool>,
}

impl ScenarioFile {
    pub fn resolve(&self) -> Result<Scenario> {
        let name = self.name.ok_or_else(|| Error::InvalidParams("scenario name missing".into()))?;
        let mut s = Scenario::preset(name, self.seed.unwrap_or(0));
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { s.$f = v.clone(); } )* };
        }
        apply!(
            graph,
            variant,
            suite,
            transport,
            pad_responses,
            restart_from_log,
            adversary,
            workers,
            waves,
            deletions,
            hider_fraction,
            random_probes,
            phantom_fetches,
            record_transcript
        );
        Ok(s)
    }
}

fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_be_bytes())
        .chain_update(label.as_bytes())
        .chain_update(index.to_be_bytes())
        .finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

fn rng_for(seed: u64, label: &str, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(seed, label, index))
}

/// Runs `f` over `items` on a pool of workers, visiting items in a
/// seed-shuffled order.
pub fn parallel<T: Send>(
    items: &mut [T],
    workers: usize,
    seed: u64,
    f: impl Fn(&mut T) -> Result<()> + Sync,
) -> Result<()> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let cells: Vec<Mutex<&mut T>> = items.iter_mut().map(Mutex::new).collect();
    let next = AtomicUsize::new(0);
    let first_error = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = order.get(i) else { break };
                let mut item = cells[idx].lock().unwrap();
                if let Err(e) = f(&mut item) {
                    first_error.lock().unwrap().get_or_insert(e);
                }
            });
        }
    });
    match first_error.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// A matching server that can be rebuilt from its log mid-run.
pub struct ServerSlot {
    config: ServerConfig,
    current: RwLock<Arc<MatchingServer>>,
}

impl ServerSlot {
    pub fn new(config: ServerConfig) -> Result<Self> {
        let server = MatchingServer::new(config.clone())?;
        Ok(ServerSlot { config, current: RwLock::new(Arc::new(server)) })
    }

    /// Discards the in-memory state and replays the log.
    pub fn restart(&self) -> Result<()> {
        let mut current = self.current.write().unwrap();
        *current = Arc::new(MatchingServer::new(self.config.clone())?);
        Ok(())
    }

    pub fn stats(&self) -> ServerStats {
        self.current.read().unwrap().stats()
    }
}

impl Service for ServerSlot {
    fn handle(&self, request: Request) -> Response {
        let server = self.current.read().unwrap().clone();
        server.handle(request)
    }
}

/// A recorded connection to a service, in-process or over loopback TCP.
struct Link {
    transport: RecordingTransport<Box<dyn Transport>>,
    _server: Option<ServerHandle>,
}

fn link(service: Arc<dyn Service>, kind: TransportKind, keep_lines: bool) -> Result<Link> {
    let (inner, server): (Box<dyn Transport>, _) = match kind {
        TransportKind::InProcess => (Box::new(InProcess::new(service)), None),
        TransportKind::Socket => {
            let handle = serve("127.0.0.1:0", service)?;
            (Box::new(TcpTransport::new(handle.addr())?), Some(handle))
        }
    };
    Ok(Link { transport: RecordingTransport::new(inner, keep_lines), _server: server })
}

enum Actor {
    Main(Box<MemberState>),
    Simple(SimpleMember),
}

impl Actor {
    fn id(&self) -> &Identity {
        match self {
            Actor::Main(m) => m.identity(),
            Actor::Simple(m) => m.identity(),
        }
    }

    fn member(&mut self) -> &mut MemberState {
        match self {
            Actor::Main(m) => m,
            Actor::Simple(_) => unreachable!("main-protocol actor expected"),
        }
    }

    fn submit(&mut self, t: &dyn Transport) -> Result<()> {
        let failed = match self {
            Actor::Main(m) => m.submit_all(t)?,
            Actor::Simple(m) => m.submit_all(t)?,
        };
        if failed > 0 {
            return Err(Error::Transport(format!("{failed} submissions failed")));
        }
        Ok(())
    }

    fn query(&mut self, t: &dyn Transport) -> Result<DiscoveryOutput> {
        let out = match self {
            Actor::Main(m) => m.query_all(t)?,
            Actor::Simple(m) => m.query_all(t)?,
        };
        if out.incomplete {
            return Err(Error::Transport("queries failed".into()));
        }
        Ok(out)
    }
}

struct World {
    graph: SocialGraph,
    params: Arc<SystemParams>,
    registry: EnrollmentRegistry,
    certs: BTreeMap<Identity, Certificate>,
}

fn suite_for(choice: SuiteChoice) -> GroupSuite {
    match choice {
        SuiteChoice::Production => GroupSuite::Production,
        SuiteChoice::Transparent => GroupSuite::Transparent(TransparentGroup::large()),
    }
}

/// Sets up the authority, issues every member's certificate (including
/// members that join later), then erases the master secret.
fn build_world(s: &Scenario, graph: SocialGraph, extra: &[Identity]) -> Result<World> {
    let mut seed = [0u8; 32];
    rng_for(s.seed, "authority", 0).fill_bytes(&mut seed);
    let mut authority = setup(SecurityProfile::Test, suite_for(s.suite), Some(seed))?;
    let mut certs = BTreeMap::new();
    if s.variant != ProtocolVariant::Simple {
        for id in graph.members.iter().chain(extra) {
            let proof = authority.registry().secret_for(id);
            certs.insert(id.clone(), authority.issue_certificate(id, &proof)?);
        }
    }
    authority.erase_master();
    Ok(World { params: Arc::new(authority.params().clone()), registry: authority.registry().clone(), graph, certs })
}

fn main_actors(s: &Scenario, world: &World) -> Result<Vec<Actor>> {
    world
        .graph
        .member_list()
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let contacts = world.graph.contact_list(&id)?;
            let mut m = MemberState::new(world.params.clone(), world.certs[&id].clone(), contacts)?;
            m.seed_rng(derive_seed(s.seed, "member", i as u64));
            Ok(Actor::Main(Box::new(m)))
        })
        .collect()
}

fn simple_actors(world: &World) -> Result<Vec<Actor>> {
    let kdf = KdfParams::test(SIMPLE_KDF_DOMAIN);
    world
        .graph
        .member_list()
        .into_iter()
        .map(|id| {
            let contacts = world.graph.contact_list(&id)?;
            Ok(Actor::Simple(SimpleMember::new(id, contacts, kdf.clone())?))
        })
        .collect()
}

struct KeyInfra {
    server: Arc<KeyServer>,
    link: Link,
}

fn key_infra(s: &Scenario, world: &World) -> Result<KeyInfra> {
    let mut phantom = [0u8; 32];
    rng_for(s.seed, "phantom", 0).fill_bytes(&mut phantom);
    let server = Arc::new(KeyServer::new(world.params.suite, world.registry.clone(), phantom));
    let link = link(server.clone(), s.transport, false)?;
    Ok(KeyInfra { server, link })
}

/// Enrolls every member at the key server and fetches each contact's key.
fn keyserver_actors(s: &Scenario, world: &World, keys: &KeyInfra) -> Result<Vec<Actor>> {
    let suite = world.params.suite;
    let mut actors = Vec::new();
    for (i, id) in world.graph.member_list().into_iter().enumerate() {
        let keypair = DhKeyPair::generate(&suite, &mut rng_for(s.seed, "dh", i as u64));
        enroll(&keys.link.transport, &id, &keypair, &world.registry.secret_for(&id))?;
        let contacts = world.graph.contact_list(&id)?;
        let mut m = MemberState::with_dh(world.params.clone(), id, keypair, contacts)?;
        m.seed_rng(derive_seed(s.seed, "member", i as u64));
        actors.push(Actor::Main(Box::new(m)));
    }
    parallel(&mut actors, s.workers, derive_seed(s.seed, "fetch", 0), |a| {
        let m = a.member();
        for c in m.contacts().all() {
            let key = fetch_key(&suite, &keys.link.transport, &c)?;
            m.set_peer_key(c, key);
        }
        Ok(())
    })?;
    Ok(actors)
}

struct Matching {
    slot: Arc<ServerSlot>,
    link: Link,
    log: Option<PathBuf>,
}

impl Drop for Matching {
    fn drop(&mut self) {
        if let Some(path) = &self.log {
            let _ = std::fs::remove_file(path);
        }
    }
}

fn matching(
    s: &Scenario,
    mode: ModeKind,
    wrap: Option<&dyn Fn(Arc<ServerSlot>) -> Arc<dyn Service>>,
) -> Result<Matching> {
    let log = s.restart_from_log.then(|| {
        let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default().as_nanos();
        std::env::temp_dir().join(format!("mcd-sim-{}-{}-{nanos}.log", std::process::id(), s.seed))
    });
    let config = ServerConfig {
        mode,
        variant: if s.variant == ProtocolVariant::Simple { Variant::Simple } else { Variant::Main },
        pad_responses: s.pad_responses,
        rate_limit: None,
        log: log.clone(),
    };
    let slot = Arc::new(ServerSlot::new(config)?);
    let service: Arc<dyn Service> = match wrap {
        Some(w) => w(slot.clone()),
        None => slot.clone(),
    };
    let keep = s.record_transcript && s.variant != ProtocolVariant::Simple;
    Ok(Matching { link: link(service, s.transport, keep)?, slot, log })
}

type Outputs = BTreeMap<Identity, BTreeSet<Identity>>;

/// Submission phase, `between`, phase switch, query phase.
fn static_flow(
    s: &Scenario,
    actors: &mut [Actor],
    m: &Matching,
    between: impl FnOnce() -> Result<()>,
) -> Result<Outputs> {
    let t = &m.link.transport;
    parallel(actors, s.workers, derive_seed(s.seed, "submit-order", 0), |a| a.submit(t))?;
    between()?;
    if s.restart_from_log {
        m.slot.restart()?;
    }
    t.exchange(&Request::AdvancePhase)?.into_result()?;
    let outputs = Mutex::new(BTreeMap::new());
    parallel(actors, s.workers, derive_seed(s.seed, "query-order", 0), |a| {
        let out = a.query(t)?;
        outputs.lock().unwrap().insert(a.id().clone(), out.discovered);
        Ok(())
    })?;
    Ok(outputs.into_inner().unwrap())
}

fn expected_stats(s: &Scenario, graph: &SocialGraph) -> ServerStats {
    let oracle = ideal_oracle(graph);
    match s.variant {
        ProtocolVariant::Simple => ServerStats {
            s_c: graph
                .members
                .iter()
                .map(|m| graph.contacts(m).len() - graph.hidden_marks.get(m).map_or(0, BTreeSet::len))
                .sum::<usize>() as u64,
            s_mc: 0,
        },
        _ => oracle.stats(),
    }
}

fn finish_static(report: &mut Report, s: &Scenario, graph: &SocialGraph, m: &Matching, outputs: Outputs) {
    report.members = graph.members.len();
    report.outputs = outputs;
    report.expected = ideal_oracle(graph).out;
    report.compare_outputs("outputs_match_oracle");
    let stats = m.slot.stats();
    let want = expected_stats(s, graph);
    report.server_stats = Some(stats);
    report.expected_stats = Some(want);
    report.check("stats_match_oracle", stats == want, format!("got {stats:?}, want {want:?}"));
    report.transcript = m.link.transport.stats();
    hygiene(report, s, graph, m);
}

fn hygiene(report: &mut Report, s: &Scenario, graph: &SocialGraph, m: &Matching) {
    if s.record_transcript && s.variant != ProtocolVariant::Simple {
        let problems = scan_transcript(&m.link.transport.lines(), &graph.identities);
        let detail = problems.first().cloned().unwrap_or_default();
        report.check("transcript_hygiene", problems.is_empty(), detail);
    }
}

pub fn run_scenario(s: &Scenario) -> Report {
    let start = Instant::now();
    let mut report = Report::new(s);
    if let Err(e) = s.validate().and_then(|_| dispatch(s, &mut report)) {
        report.valid = false;
        report.error = Some(e.to_string());
    }
    report.finish(start.elapsed());
    report
}

fn dispatch(s: &Scenario, report: &mut Report) -> Result<()> {
    let graph = gen_graph(&s.graph, s.seed)?;
    match s.name {
        ScenarioName::HonestStatic => honest_static(s, graph, report),
        ScenarioName::HonestDynamic => honest_dynamic(s, graph, report),
        ScenarioName::MaliciousServer => malicious_server(s, graph, report),
        ScenarioName::HidingMember => hiding_member(s, graph, report),
        ScenarioName::GuessingAttacker => guessing_attacker(s, graph, report),
        ScenarioName::Replay => replay(s, graph, report),
        ScenarioName::SimpleWeakness => simple_weakness(s, graph, report),
        ScenarioName::KeyserverRun => keyserver_run(s, graph, report),
        ScenarioName::KeyserverCollusion => keyserver_collusion(s, graph, report),
        ScenarioName::DirectoryE2e => directory_e2e(s, graph, report),
    }
}

/// Runs a plain static execution of `s.variant` and returns the outputs.
fn run_static_variant(s: &Scenario, world: &World, report: &mut Report) -> Result<Outputs> {
    let m = matching(s, ModeKind::Static, None)?;
    let outputs = match s.variant {
        ProtocolVariant::Main => {
            let mut actors = main_actors(s, world)?;
            static_flow(s, &mut actors, &m, || Ok(()))?
        }
        ProtocolVariant::Simple => {
            let mut actors = simple_actors(world)?;
            static_flow(s, &mut actors, &m, || Ok(()))?
        }
        ProtocolVariant::Keyserver => {
            let keys = key_infra(s, world)?;
            let mut actors = keyserver_actors(s, world, &keys)?;
            static_flow(s, &mut actors, &m, || Ok(()))?
        }
    };
    finish_static(report, s, &world.graph, &m, outputs.clone());
    Ok(outputs)
}

fn honest_static(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let world = build_world(s, graph, &[])?;
    run_static_variant(s, &world, report)?;
    Ok(())
}

fn malicious_server(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let world = build_world(s, graph, &[])?;
    let mut params = s.adversary;
    if params.per_query == 0 {
        let queries: usize = world.graph.members.iter().map(|m| world.graph.contacts(m).len()).sum();
        params.per_query = params.inject.div_ceil(queries.max(1) as u64);
    }
    let wrapper: Mutex<Option<Arc<MaliciousServer<Arc<ServerSlot>>>>> = Mutex::new(None);
    let wrap = |slot: Arc<ServerSlot>| -> Arc<dyn Service> {
        let w = Arc::new(MaliciousServer::new(slot, params, derive_seed(s.seed, "adversary", 0)));
        *wrapper.lock().unwrap() = Some(w.clone());
        w
    };
    let m = matching(s, ModeKind::Static, Some(&wrap))?;
    let adversary = wrapper.lock().unwrap().clone().expect("wrapper built");
    let mut actors = main_actors(s, &world)?;
    let outputs = static_flow(s, &mut actors, &m, || Ok(()))?;

    let expected = ideal_oracle(&world.graph).out;
    let false_discoveries: usize = outputs.iter().map(|(id, got)| got.difference(&expected[id]).count()).sum();
    let missed: usize = expected.iter().map(|(id, want)| want.difference(&outputs[id]).count()).sum();
    let counters = adversary.counters();
    report.adversary = Some(counters);
    report.members = world.graph.members.len();
    report.outputs = outputs;
    report.expected = expected;
    report.check("zero_false_discoveries", false_discoveries == 0, format!("{false_discoveries} false discoveries"));
    report.check(
        "injection_budget_spent",
        counters.injected == params.inject,
        format!("injected {} of {}", counters.injected, params.inject),
    );
    report.check(
        "missed_equals_dropped",
        missed as u64 == counters.dropped && counters.dropped == params.drop,
        format!("missed {missed}, dropped {}, configured {}", counters.dropped, params.drop),
    );
    let stats = m.slot.stats();
    report.server_stats = Some(stats);
    report.expected_stats = Some(ideal_oracle(&world.graph).stats());
    report.transcript = m.link.transport.stats();
    Ok(())
}

/// Picks hiders among members so that no two hiders are mutual contacts,
/// and marks every contact of each hider hidden.
fn choose_hiders(s: &Scenario, graph: &mut SocialGraph) -> Vec<Identity> {
    let mut candidates = graph.member_list();
    candidates.shuffle(&mut rng_for(s.seed, "hiders", 0));
    let want = (s.hider_fraction * graph.members.len() as f64).ceil() as usize;
    let mut hiders: Vec<Identity> = Vec::new();
    for c in candidates {
        if hiders.len() == want {
            break;
        }
        if hiders.iter().any(|h| graph.has_edge(h, &c) && graph.has_edge(&c, h)) {
            continue;
        }
        hiders.push(c);
    }
    for h in &hiders {
        for c in graph.contacts(h).clone() {
            graph.hide(h, &c);
        }
    }
    hiders
}

fn hiding_member(s: &Scenario, mut graph: SocialGraph, report: &mut Report) -> Result<()> {
    graph.hidden_marks.clear();
    let hiders = choose_hiders(s, &mut graph);
    let world = build_world(s, graph, &[])?;
    let outputs = run_static_variant(s, &world, report)?;
    let g = &world.graph;
    let mut hider_misses = Vec::new();
    let mut leaks = Vec::new();
    for h in &hiders {
        for x in g.contacts(h) {
            if g.members.contains(x) && g.has_edge(x, h) {
                if !outputs[h].contains(x) {
                    hider_misses.push(format!("{h} missed {x}"));
                }
                if outputs[x].contains(h) {
                    leaks.push(format!("{x} found hider {h}"));
                }
            }
        }
    }
    report.check("hiders_present", !hiders.is_empty(), "no hider chosen");
    report.check("hider_discovers_partners", hider_misses.is_empty(), hider_misses.join("; "));
    report.check("partners_never_discover_hider", leaks.is_empty(), leaks.join("; "));
    Ok(())
}

fn guessing_attacker(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    // The attacker claims the non-member most members list as a contact.
    let attacker = graph
        .identities
        .iter()
        .filter(|i| !graph.members.contains(*i))
        .max_by_key(|i| graph.members.iter().filter(|m| graph.has_edge(m, i)).count())
        .cloned()
        .ok_or_else(|| Error::InvalidParams("guessing_attacker needs a non-member identity".into()))?;
    let world = build_world(s, graph, &[])?;
    let suite = world.params.suite;
    let r = suite.random_scalar(&mut rng_for(s.seed, "forgery", 0));
    let (q1, q2) = suite.hash_to_points(&attacker)?;
    let forged = Certificate { identity: attacker.clone(), c1: suite.mul(&q1, &r)?, c2: suite.mul(&q2, &r)? };
    let contacts = ContactList::new(&attacker, world.graph.members.iter().cloned(), [])?;
    let mut forger = MemberState::new_unverified(world.params.clone(), Credential::Certificate(forged), contacts)?;
    forger.seed_rng(derive_seed(s.seed, "forger", 0));

    let m = matching(s, ModeKind::Static, None)?;
    let mut actors = main_actors(s, &world)?;
    actors.push(Actor::Main(Box::new(forger)));
    let mut outputs = static_flow(s, &mut actors, &m, || Ok(()))?;
    let stolen = outputs.remove(&attacker).unwrap_or_default();
    report.check("attacker_discovers_nothing", stolen.is_empty(), format!("attacker found {} members", stolen.len()));
    report.members = world.graph.members.len();
    report.outputs = outputs;
    report.expected = ideal_oracle(&world.graph).out;
    report.compare_outputs("honest_outputs_match_oracle");
    report.server_stats = Some(m.slot.stats());
    report.transcript = m.link.transport.stats();
    Ok(())
}

fn replay(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let mut s = s.clone();
    s.record_transcript = true;
    let world = build_world(&s, graph, &[])?;
    let m = matching(&s, ModeKind::Static, None)?;
    let mut actors = main_actors(&s, &world)?;
    let t = &m.link.transport;
    let replayed = std::cell::Cell::new(0u64);
    let outputs = static_flow(&s, &mut actors, &m, || {
        for line in t.lines() {
            let request = Request::from_line(&line)?;
            if matches!(request, Request::Submit { .. }) {
                t.exchange(&request)?.into_result()?;
                replayed.set(replayed.get() + 1);
            }
        }
        Ok(())
    })?;
    // Replay every captured query too, after the members are done.
    let before = m.slot.stats();
    for line in t.lines() {
        let request = Request::from_line(&line)?;
        if matches!(request, Request::Query { .. }) {
            t.exchange(&request)?.into_result()?;
            replayed.set(replayed.get() + 1);
        }
    }
    report.check("replay_happened", replayed.get() > 0, "nothing captured");
    report.check("query_replay_leaves_store", m.slot.stats() == before, "");
    finish_static(report, &s, &world.graph, &m, outputs);
    Ok(())
}

fn simple_weakness(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let world = build_world(s, graph, &[])?;
    let m = matching(s, ModeKind::Static, None)?;
    let mut actors = simple_actors(&world)?;
    let outputs = static_flow(s, &mut actors, &m, || Ok(()))?;
    finish_static(report, s, &world.graph, &m, outputs);

    // Probe every ordered pair (a, b) with b a participating member.
    let kdf = KdfParams::test(SIMPLE_KDF_DOMAIN);
    let g = &world.graph;
    let (mut edge_hits, mut edges, mut non_edge_hits, mut non_edges) = (0, 0, 0, 0);
    for b in &g.members {
        for a in &g.identities {
            if a == b {
                continue;
            }
            let hit = attack_contact_probe(a, b, &kdf, &m.link.transport)?;
            if g.has_edge(b, a) && !g.is_hidden(b, a) {
                edges += 1;
                edge_hits += hit as u64;
            } else {
                non_edges += 1;
                non_edge_hits += hit as u64;
            }
        }
    }
    report.check(
        "probe_succeeds_on_every_edge",
        edges > 0 && edge_hits == edges,
        format!("{edge_hits}/{edges} edges revealed"),
    );
    report.check("probe_silent_on_non_edges", non_edge_hits == 0, format!("{non_edge_hits}/{non_edges} false hits"));
    Ok(())
}

fn keyserver_run(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let world = build_world(s, graph, &[])?;
    let keys = key_infra(s, &world)?;
    let m = matching(s, ModeKind::Static, None)?;
    let mut actors = keyserver_actors(s, &world, &keys)?;
    let outputs = static_flow(s, &mut actors, &m, || Ok(()))?;
    finish_static(report, s, &world.graph, &m, outputs.clone());

    // Same graph under the certificate protocol.
    let mut main_s = s.clone();
    main_s.variant = ProtocolVariant::Main;
    let main_world = build_world(&main_s, world.graph.clone(), &[])?;
    let mm = matching(&main_s, ModeKind::Static, None)?;
    let mut main = main_actors(&main_s, &main_world)?;
    let main_outputs = static_flow(&main_s, &mut main, &mm, || Ok(()))?;
    report.check("matches_main_protocol", main_outputs == outputs, "");

    let g = &world.graph;
    let unenrolled: Vec<_> = g.identities.iter().filter(|i| !g.members.contains(*i)).take(10).collect();
    let mut inconsistent = 0;
    for u in &unenrolled {
        let line = Request::GetKey { id: u.to_string() }.to_line();
        let first = keys.server.handle_line(&line);
        for _ in 1..s.phantom_fetches {
            inconsistent += (keys.server.handle_line(&line) != first) as u64;
        }
    }
    report.check("phantom_keys_stable", inconsistent == 0, format!("{inconsistent} differing responses"));
    if let (Some(u), Some(e)) = (unenrolled.first(), g.members.first()) {
        let phantom = keys.server.handle_line(&Request::GetKey { id: u.to_string() }.to_line());
        let enrolled = keys.server.handle_line(&Request::GetKey { id: e.to_string() }.to_line());
        let shape = |l: &str| (l.len(), l[..8].to_owned());
        report.check(
            "response_shapes_identical",
            shape(&phantom) == shape(&enrolled),
            format!("{phantom} vs {enrolled}"),
        );
    }
    let counts = keys.server.fetch_counts();
    let in_degree = |x: &Identity| g.members.iter().filter(|m| g.has_edge(m, x)).count() as u64;
    let wrong = g.identities.iter().filter(|x| {
        let extra = if unenrolled.contains(x) { s.phantom_fetches } else { 0 };
        let extra = extra + u64::from(unenrolled.first() == Some(x)) + u64::from(g.members.first() == Some(*x));
        counts.get(*x).copied().unwrap_or(0) != in_degree(x) + extra
    });
    report.check("fetch_counts_equal_popularity", wrong.count() == 0, "");
    Ok(())
}

fn keyserver_collusion(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let world = build_world(s, graph, &[])?;
    let keys = key_infra(s, &world)?;
    let m = matching(s, ModeKind::Static, None)?;
    let mut actors = keyserver_actors(s, &world, &keys)?;
    let g = &world.graph;
    let suite = world.params.suite;
    let targets: Vec<(Identity, Identity)> = g
        .members
        .iter()
        .flat_map(|m| g.contacts(m).iter().filter(|u| !g.members.contains(*u)).map(move |u| (m.clone(), u.clone())))
        .collect();
    let t = &m.link.transport;
    // The colluding servers answer for each unenrolled contact using the
    // phantom secret, exactly as that contact would if it had enrolled.
    let outputs = static_flow(s, &mut actors, &m, || {
        for (member, ghost) in &targets {
            let kp = keys.server.phantom_keypair(ghost);
            let pk_m = fetch_key(&suite, &keys.link.transport, member)?;
            let token = dh_token(&suite, &kp, &pk_m)?;
            let qg = suite.hash_to_slot(ghost, Slot::Slot1)?;
            let qm = suite.hash_to_slot(member, Slot::Slot1)?;
            let forged = TuplePair::new(ordered_h2(&token, &qg, &qm), ordered_h2(&token, &qm, &qm));
            t.exchange(&Request::submit(&forged))?.into_result()?;
        }
        Ok(())
    })?;
    let expected = ideal_oracle(g).out;
    let fooled = targets.iter().filter(|(m, u)| outputs[m].contains(u)).count();
    let other_false: usize = outputs
        .iter()
        .map(|(id, got)| {
            got.iter().filter(|x| !expected[id].contains(*x) && !targets.contains(&(id.clone(), (*x).clone()))).count()
        })
        .sum();
    report.members = g.members.len();
    report.outputs = outputs;
    report.expected = expected;
    report.check("collusion_targets_exist", !targets.is_empty(), "no member lists an unenrolled identity");
    report.check(
        "collusion_forges_discoveries",
        fooled == targets.len(),
        format!("{fooled}/{} forged discoveries", targets.len()),
    );
    report.check("no_other_false_discoveries", other_false == 0, format!("{other_false}"));
    report.server_stats = Some(m.slot.stats());
    report.transcript = m.link.transport.stats();
    Ok(())
}

fn directory_e2e(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let world = build_world(s, graph, &[])?;
    let directory = Arc::new(KeyDirectory::new(world.registry.clone()));
    let dir_link = link(directory.clone(), s.transport, false)?;
    let m = matching(s, ModeKind::Static, None)?;
    let mut actors = main_actors(s, &world)?;
    let mut keys = BTreeMap::new();
    for (i, a) in actors.iter_mut().enumerate() {
        let member = a.member();
        let mut key = vec![0u8; 48];
        rng_for(s.seed, "dir-key", i as u64).fill_bytes(&mut key);
        let gates = member.directory_gates()?;
        let id = member.identity().clone();
        dir_put(&dir_link.transport, &id, &key, gates, vec![], &world.registry.secret_for(&id))?;
        keys.insert(id, key);
    }
    let outputs = static_flow(s, &mut actors, &m, || Ok(()))?;
    finish_static(report, s, &world.graph, &m, outputs.clone());

    let (mut opened, mut attempts) = (0, 0);
    for a in actors.iter_mut() {
        let member = a.member();
        for x in &outputs[member.identity()] {
            attempts += 1;
            let token = member.derive_directory_access_token(x)?;
            if dir_get(&dir_link.transport, x, &token)?.as_ref() == Some(&keys[x]) {
                opened += 1;
            }
        }
    }
    report.check("discovered_keys_open", opened == attempts, format!("{opened}/{attempts}"));

    // Random guessing goes through the codec in-process to keep the loopback
    // connection count bounded.
    let local = InProcess::new(directory.clone());
    let members = world.graph.member_list();
    let mut rng = rng_for(s.seed, "probes", 0);
    let mut released = 0;
    for i in 0..s.random_probes {
        let target = &members[i as usize % members.len().max(1)];
        if dir_get(&local, target, &AugmentedToken::random(&mut rng))?.is_some() {
            released += 1;
        }
    }
    report.check("random_tokens_never_open", released == 0, format!("{released}/{} released", s.random_probes));
    let token = AugmentedToken::random(&mut rng).to_hex();
    let nobody = world.graph.identities.iter().find(|i| !world.graph.members.contains(*i));
    if let (Some(member), Some(nobody)) = (members.first(), nobody) {
        let bad_token = directory.handle_line(&format!(r#"{{"op":"dir_get","id":"{member}","token":"{token}"}}"#));
        let no_record = directory.handle_line(&format!(r#"{{"op":"dir_get","id":"{nobody}","token":"{token}"}}"#));
        report.check("denials_identical", bad_token == no_record, format!("{bad_token} vs {no_record}"));
    }
    Ok(())
}

fn honest_dynamic(s: &Scenario, graph: SocialGraph, report: &mut Report) -> Result<()> {
    let world = build_world(s, graph, &[])?;
    let g = &world.graph;
    let mut order = g.member_list();
    order.shuffle(&mut rng_for(s.seed, "waves", 0));
    let waves = s.waves.min(order.len().max(1));
    let wave_of: BTreeMap<Identity, usize> =
        order.iter().enumerate().map(|(i, id)| (id.clone(), i * waves / order.len().max(1))).collect();

    let clean_mutual = |a: &Identity, b: &Identity| {
        g.members.contains(a)
            && g.members.contains(b)
            && g.has_edge(a, b)
            && g.has_edge(b, a)
            && !g.is_hidden(a, b)
            && !g.is_hidden(b, a)
    };
    // Deleters join first and drop a mutual contact that joins later.
    let mut deletions: Vec<(Identity, Identity)> = Vec::new();
    for d in order.iter().filter(|d| wave_of[*d] == 0) {
        if deletions.len() == s.deletions {
            break;
        }
        if let Some(x) = g.contacts(d).iter().find(|x| {
            wave_of.get(*x).is_some_and(|w| *w > 0)
                && clean_mutual(d, x)
                && !deletions.iter().any(|(a, b)| a == *x || b == *x || b == d)
        }) {
            deletions.push((d.clone(), x.clone()));
        }
    }
    let mut final_graph = g.clone();
    for (d, x) in &deletions {
        final_graph.remove_edge(d, x);
    }

    let m = matching(s, ModeKind::Dynamic, None)?;
    let t = &m.link.transport;
    let mut actors = main_actors(s, &world)?;
    let index: BTreeMap<Identity, usize> = actors.iter().enumerate().map(|(i, a)| (a.id().clone(), i)).collect();
    let snapshot = |actors: &mut [Actor]| -> Outputs {
        actors.iter_mut().map(|a| (a.id().clone(), a.member().discovered())).collect()
    };
    let round = |actors: &mut [Actor], who: &BTreeSet<Identity>, label: u64| {
        let mut picked: Vec<&mut Actor> = actors.iter_mut().filter(|a| who.contains(a.id())).collect();
        parallel(&mut picked, s.workers, derive_seed(s.seed, "dyn-round", label), |a| {
            let out = a.member().dynamic_round(t)?;
            if out.incomplete {
                return Err(Error::Transport("dynamic queries failed".into()));
            }
            Ok(())
        })
    };

    let mut first_round: Outputs = BTreeMap::new();
    let mut after_wave: Vec<Outputs> = Vec::new();
    let mut joined: BTreeSet<Identity> = BTreeSet::new();
    for w in 0..waves {
        let new: BTreeSet<Identity> = wave_of.iter().filter(|(_, v)| **v == w).map(|(k, _)| k.clone()).collect();
        round(&mut actors, &new, 2 * w as u64)?;
        for id in &new {
            first_round.insert(id.clone(), actors[index[id]].member().discovered());
        }
        if w == 0 {
            for (d, x) in &deletions {
                actors[index[d]].member().delete_contact(x, t)?;
            }
        }
        round(&mut actors, &joined, 2 * w as u64 + 1)?;
        joined.extend(new);
        after_wave.push(snapshot(&mut actors));
    }
    round(&mut actors, &joined, u64::MAX)?;
    let outputs = snapshot(&mut actors);

    let (mut later_ok, mut later_total, mut earlier_ok, mut earlier_total) = (0, 0, 0, 0);
    for a in g.members.iter() {
        for b in g.contacts(a) {
            if !clean_mutual(a, b) || deletions.iter().any(|(d, x)| (d == a && x == b) || (d == b && x == a)) {
                continue;
            }
            let (wa, wb) = (wave_of[a], wave_of[b]);
            if wa < wb {
                // b joins later: finds a on its first query; a finds b only on re-query.
                later_total += 1;
                later_ok += first_round[b].contains(a) as u64;
                earlier_total += 1;
                let before = &after_wave[wb - 1][a];
                let after = &after_wave[wb][a];
                earlier_ok += (!before.contains(b) && after.contains(b)) as u64;
            }
        }
    }
    report.check("later_querier_discovers_first", later_ok == later_total, format!("{later_ok}/{later_total}"));
    report.check("earlier_discovers_on_requery", earlier_ok == earlier_total, format!("{earlier_ok}/{earlier_total}"));
    report.check("staggered_pairs_exist", later_total > 0, "");
    let leaked: Vec<_> = deletions
        .iter()
        .filter(|(d, x)| outputs[x].contains(d) || first_round[x].contains(d) || outputs[d].contains(x))
        .map(|(d, x)| format!("{x}/{d}"))
        .collect();
    report.check("deleted_contact_never_discovers", leaked.is_empty(), leaked.join(", "));
    report.check(
        "deletions_performed",
        deletions.len() == s.deletions,
        format!("{} of {}", deletions.len(), s.deletions),
    );

    report.members = g.members.len();
    report.outputs = outputs;
    report.expected = ideal_oracle(&final_graph).out;
    report.compare_outputs("outputs_match_oracle");
    report.server_stats = Some(m.slot.stats());
    report.transcript = t.stats();
    hygiene(report, s, g, &m);
    Ok(())
}
