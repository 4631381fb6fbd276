//! The `mcd` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::authority::{setup, Authority, Certificate, CertificateFile, SecurityProfile, SystemParams};
use crate::client::{ContactListFile, DiscoveryMode, DiscoveryReport, MemberState};
use crate::config::{CliConfig, ConfigArgs};
use crate::crypto::Identity;
use crate::directory::{dir_get, dir_put, KeyDirectory};
use crate::enrollment::EnrollmentRegistry;
use crate::error::{Error, Result};
use crate::net::{serve, TcpTransport, Transport};
use crate::server::{MatchingServer, ModeKind, ServerConfig, Variant};
use crate::sim::{run_scenario, ProtocolVariant, Scenario, ScenarioFile, ScenarioName, TransportKind};
use crate::variants::keyserver::{self, DhKeyPair, KeyServer};
use crate::variants::simple::SimpleMember;
use crate::wire::{ErrorCode, Request, Response, Service};

#[derive(Parser, Debug)]
#[command(name = "mcd", version, about = "Mutual contact discovery")]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum PhaseArg {
    /// Key-server variant only: register the member's key and stop. Every
    /// member must enroll before anyone submits.
    Enroll,
    Submit,
    Query,
    #[default]
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Create system parameters, the master secret and the enrollment registry.
    Setup {
        #[arg(long, value_enum, default_value = "test")]
        profile: SecurityProfile,
        /// Replace an existing deployment in the data directory.
        #[arg(long)]
        force: bool,
    },
    /// Issue certificates; `--close` erases the master secret afterwards.
    Issue {
        #[arg(long = "id", value_name = "IDENTITY")]
        ids: Vec<Identity>,
        #[arg(long)]
        close: bool,
    },
    /// Run the matching server.
    ServeMatch {
        #[arg(long, default_value = "127.0.0.1:7700")]
        listen: String,
        #[arg(long, value_enum, default_value = "static")]
        mode: ModeKind,
        #[arg(long, value_enum, default_value = "main")]
        variant: Variant,
        /// Durable operation log, replayed on start.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        pad_responses: bool,
        /// Requests per second across all connections.
        #[arg(long)]
        rate_limit: Option<u32>,
    },
    /// Run the key server of the key-server variant.
    ServeKeys {
        #[arg(long, default_value = "127.0.0.1:7701")]
        listen: String,
    },
    /// Run the key directory.
    ServeDir {
        #[arg(long, default_value = "127.0.0.1:7702")]
        listen: String,
    },
    /// Static discovery for one member.
    Discover {
        #[arg(long)]
        contacts: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        phase: PhaseArg,
        #[arg(long, value_enum, default_value = "main")]
        variant: ProtocolVariant,
        /// Certificate file (default: <data-dir>/certs/<identity>.json).
        #[arg(long)]
        cert: Option<PathBuf>,
        /// After discovery, publish this hex public key at the directory,
        /// gated for visible contacts.
        #[arg(long, value_name = "HEX")]
        publish_key: Option<String>,
        /// After discovery, fetch discovered contacts' keys from the directory.
        #[arg(long)]
        fetch_keys: bool,
    },
    /// Dynamic-mode discovery rounds for one member.
    DynamicWatch {
        #[arg(long)]
        contacts: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Number of rounds; 0 runs until killed.
        #[arg(long, default_value_t = 1)]
        rounds: u64,
        #[arg(long, default_value_t = 1000)]
        interval_ms: u64,
    },
    /// Delete a contact's tuple from a dynamic server and from the contact file.
    DeleteContact {
        #[arg(long)]
        contacts: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long)]
        contact: Identity,
        /// Re-publish this hex public key at the directory with the deleted
        /// contact's gate revoked.
        #[arg(long, value_name = "HEX")]
        publish_key: Option<String>,
    },
    /// Run a simulation scenario; exits 0 iff it passes.
    Simulate {
        #[arg(long, value_enum)]
        scenario: Option<ScenarioName>,
        /// Scenario JSON; explicit flags override it.
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        #[arg(long, value_enum)]
        transport: Option<TransportKind>,
        /// Report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the matching server's counts.
    Stats,
    /// Move a static matching server to its query phase.
    AdvancePhase,
}

/// Parses `argv` and runs it. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let config = CliConfig::resolve(&cli.config)?;
    let out = Output { json: cli.json };
    match cli.command {
        Command::Setup { profile, force } => cmd_setup(&config, &out, profile, force),
        Command::Issue { ids, close } => cmd_issue(&config, &out, &ids, close),
        Command::ServeMatch { listen, mode, variant, log, pad_responses, rate_limit } => {
            let server = MatchingServer::new(ServerConfig { mode, variant, pad_responses, rate_limit, log })?;
            serve_forever(&out, &listen, Arc::new(server))
        }
        Command::ServeKeys { listen } => {
            let params = load_params(&config.data_dir)?;
            let server =
                KeyServer::new(params.suite, load_registry(&config.data_dir)?, phantom_secret(&config.data_dir)?);
            serve_forever(&out, &listen, Arc::new(server))
        }
        Command::ServeDir { listen } => {
            let directory = KeyDirectory::new(load_registry(&config.data_dir)?);
            serve_forever(&out, &listen, Arc::new(directory))
        }
        Command::Discover { contacts, phase, variant, cert, publish_key, fetch_keys } => {
            cmd_discover(&config, &out, &contacts, phase, variant, cert, publish_key, fetch_keys)
        }
        Command::DynamicWatch { contacts, cert, rounds, interval_ms } => {
            cmd_dynamic_watch(&config, &out, &contacts, cert, rounds, interval_ms)
        }
        Command::DeleteContact { contacts, cert, contact, publish_key } => {
            cmd_delete_contact(&config, &out, &contacts, cert, &contact, publish_key)
        }
        Command::Simulate { scenario, scenario_file, transport, out: report_path } => {
            cmd_simulate(&config, &out, scenario, scenario_file, transport, report_path)
        }
        Command::Stats => {
            let server = matching_transport(&config)?;
            match server.exchange(&Request::Stats)?.into_result()? {
                Response::Stats { s_c, s_mc } => {
                    out.emit(&StatsOutput { s_c, s_mc }, || format!("s_c {s_c}\ns_mc {s_mc}"));
                    Ok(0)
                }
                _ => Err(Error::UnexpectedResponse),
            }
        }
        Command::AdvancePhase => {
            matching_transport(&config)?.exchange(&Request::AdvancePhase)?.into_result()?;
            out.emit(&Response::ok(), || "query phase".into());
            Ok(0)
        }
    }
}

struct Output {
    json: bool,
}

impl Output {
    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        let line = if self.json { serde_json::to_string(value).expect("output serializes") } else { text() };
        let mut stdout = std::io::stdout().lock();
        let _ = writeln!(stdout, "{line}");
        let _ = stdout.flush();
    }
}

#[derive(Serialize, Deserialize)]
pub struct SetupOutput {
    pub data_dir: PathBuf,
    pub params: crate::authority::ParamsFile,
}

#[derive(Serialize, Deserialize)]
pub struct IssueOutput {
    pub issued: Vec<Identity>,
    pub closed: bool,
}

#[derive(Serialize, Deserialize)]
pub struct ListeningOutput {
    pub listening: String,
}

#[derive(Serialize, Deserialize)]
pub struct StatsOutput {
    pub s_c: u64,
    pub s_mc: u64,
}

#[derive(Serialize, Deserialize)]
pub struct DiscoverOutput {
    #[serde(flatten)]
    pub report: DiscoveryReport,
    /// Directory keys of discovered contacts, hex.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub keys: BTreeMap<Identity, String>,
}

#[derive(Serialize, Deserialize)]
pub struct DeleteOutput {
    pub deleted: Identity,
}

/// Authority state kept between `setup` and `issue --close`.
#[derive(Serialize, Deserialize)]
struct AuthorityFile {
    profile: SecurityProfile,
    /// `None` once issuance is closed.
    master: Option<String>,
}

/// Handed to an identity's owner at issuance.
#[derive(Serialize, Deserialize)]
struct CredentialFile {
    identity: Identity,
    enrollment_secret: String,
}

#[derive(Serialize, Deserialize)]
struct DhKeyFile {
    identity: Identity,
    secret: String,
}

#[derive(Serialize, Deserialize)]
struct PhantomFile {
    phantom_secret: String,
}

/// Identities become file names; anything outside a safe set is hex-encoded.
fn file_stem(id: &Identity) -> String {
    let s = id.as_str();
    let safe = s.chars().all(|c| c.is_ascii_alphanumeric() || "+-_.@".contains(c)) && !s.starts_with('.');
    if safe {
        s.to_owned()
    } else {
        format!("x{}", hex::encode(s))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(value)? + "\n")?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn params_path(dir: &Path) -> PathBuf {
    dir.join("params.json")
}

fn load_params(dir: &Path) -> Result<SystemParams> {
    SystemParams::from_file(&read_json(&params_path(dir))?)
}

fn load_registry(dir: &Path) -> Result<EnrollmentRegistry> {
    read_json(&dir.join("enrollment.json"))
}

fn enrollment_secret(dir: &Path, id: &Identity) -> Result<Vec<u8>> {
    let file: CredentialFile = read_json(&dir.join("credentials").join(format!("{}.json", file_stem(id))))?;
    hex::decode(file.enrollment_secret).map_err(|_| Error::InvalidEncoding)
}

fn phantom_secret(dir: &Path) -> Result<[u8; 32]> {
    let path = dir.join("keyserver.json");
    if !path.exists() {
        let mut secret = [0u8; 32];
        OsRng.fill_bytes(&mut secret);
        write_json(&path, &PhantomFile { phantom_secret: hex::encode(secret) })?;
    }
    let file: PhantomFile = read_json(&path)?;
    hex::decode(file.phantom_secret).ok().and_then(|b| b.try_into().ok()).ok_or(Error::InvalidEncoding)
}

fn cmd_setup(config: &CliConfig, out: &Output, profile: SecurityProfile, force: bool) -> Result<i32> {
    let dir = &config.data_dir;
    if params_path(dir).exists() && !force {
        return Err(Error::Policy(format!("{} already holds a deployment; pass --force to replace it", dir.display())));
    }
    let authority = setup(profile, config.group_suite(), config.setup_seed()?)?;
    fs::create_dir_all(dir)?;
    let params = authority.params().to_file();
    write_json(&params_path(dir), &params)?;
    write_json(&dir.join("enrollment.json"), authority.registry())?;
    write_json(
        &dir.join("authority.json"),
        &AuthorityFile { profile, master: Some(authority.master().export_hex()?) },
    )?;
    out.emit(&SetupOutput { data_dir: dir.clone(), params }, || format!("parameters written to {}", dir.display()));
    Ok(0)
}

fn cmd_issue(config: &CliConfig, out: &Output, ids: &[Identity], close: bool) -> Result<i32> {
    let dir = &config.data_dir;
    let authority_path = dir.join("authority.json");
    let state: AuthorityFile = read_json(&authority_path)?;
    let Some(master) = state.master else {
        return Err(Error::IssuanceClosed);
    };
    let mut authority = Authority::restore(load_params(dir)?, &master, load_registry(dir)?)?;
    for id in ids {
        let secret = authority.registry().secret_for(id);
        let cert = authority.issue_certificate(id, &secret)?;
        let stem = file_stem(id);
        write_json(&dir.join("certs").join(format!("{stem}.json")), &cert.to_file())?;
        let credential = CredentialFile { identity: id.clone(), enrollment_secret: hex::encode(&secret) };
        write_json(&dir.join("credentials").join(format!("{stem}.json")), &credential)?;
    }
    if close {
        authority.erase_master();
        write_json(&authority_path, &AuthorityFile { profile: state.profile, master: None })?;
    }
    out.emit(&IssueOutput { issued: ids.to_vec(), closed: close }, || {
        let mut text = format!("issued {} certificate(s)", ids.len());
        if close {
            text.push_str("; issuance closed");
        }
        text
    });
    Ok(0)
}

fn serve_forever(out: &Output, listen: &str, service: Arc<dyn Service>) -> Result<i32> {
    let handle = serve(listen, service)?;
    let addr = handle.addr().to_string();
    out.emit(&ListeningOutput { listening: addr.clone() }, || format!("listening on {addr}"));
    handle.wait();
    Ok(0)
}

fn transport_for(addr: &Option<String>, flag: &str) -> Result<TcpTransport> {
    TcpTransport::new(CliConfig::require(addr, flag)?.as_str())
}

fn matching_transport(config: &CliConfig) -> Result<TcpTransport> {
    transport_for(&config.server, "server")
}

fn load_member(
    config: &CliConfig,
    contacts_path: &Path,
    cert: Option<PathBuf>,
) -> Result<(MemberState, ContactListFile)> {
    let file: ContactListFile = read_json(contacts_path)?;
    let params = Arc::new(load_params(&config.data_dir)?);
    let cert_path =
        cert.unwrap_or_else(|| config.data_dir.join("certs").join(format!("{}.json", file_stem(&file.identity))));
    let cert_file: CertificateFile = read_json(&cert_path)?;
    if cert_file.identity != file.identity {
        return Err(Error::InvalidParams(format!(
            "certificate is for {}, contact list for {}",
            cert_file.identity, file.identity
        )));
    }
    let cert = Certificate::from_file(&params.suite, &cert_file)?;
    let member = MemberState::new(params, cert, file.to_contacts()?)?;
    Ok((member, file))
}

fn load_dh_keypair(config: &CliConfig, params: &SystemParams, id: &Identity) -> Result<DhKeyPair> {
    let path = config.data_dir.join("keys").join(format!("{}.json", file_stem(id)));
    if path.exists() {
        let file: DhKeyFile = read_json(&path)?;
        let bytes: [u8; 32] =
            hex::decode(file.secret).ok().and_then(|b| b.try_into().ok()).ok_or(Error::InvalidEncoding)?;
        return DhKeyPair::from_scalar(&params.suite, params.suite.decode_scalar(&bytes)?);
    }
    let keypair = DhKeyPair::generate(&params.suite, &mut OsRng);
    write_json(&path, &DhKeyFile { identity: id.clone(), secret: hex::encode(keypair.secret().to_bytes()) })?;
    Ok(keypair)
}

/// Phase errors mean the server is not in the phase this step needs; the
/// report is then flagged incomplete instead of failing.
fn tolerate_phase<T>(result: Result<T>, incomplete: &mut bool) -> Result<Option<T>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::Server(ErrorCode::Phase)) => {
            *incomplete = true;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_discover(
    config: &CliConfig,
    out: &Output,
    contacts_path: &Path,
    phase: PhaseArg,
    variant: ProtocolVariant,
    cert: Option<PathBuf>,
    publish_key: Option<String>,
    fetch_keys: bool,
) -> Result<i32> {
    let matching = matching_transport(config)?;
    if phase == PhaseArg::Enroll && variant != ProtocolVariant::Keyserver {
        return Err(Error::InvalidParams("--phase enroll applies to the keyserver variant only".into()));
    }
    let submit = matches!(phase, PhaseArg::Submit | PhaseArg::Both);
    let query = matches!(phase, PhaseArg::Query | PhaseArg::Both);
    let mut incomplete = false;

    if variant == ProtocolVariant::Simple {
        let file: ContactListFile = read_json(contacts_path)?;
        let mut member = SimpleMember::new(file.identity.clone(), file.to_contacts()?, config.kdf_profile.params()?)?;
        let mut discovered = Default::default();
        if submit {
            incomplete |=
                tolerate_phase(member.submit_all(&matching), &mut incomplete)?.is_some_and(|failed| failed > 0);
        }
        if query {
            if let Some(o) = tolerate_phase(member.query_all(&matching), &mut incomplete)? {
                incomplete |= o.incomplete;
                discovered = o.discovered;
            }
        }
        let report = DiscoveryReport {
            identity: file.identity,
            discovered: Vec::from_iter(discovered),
            mode: DiscoveryMode::Static,
            incomplete,
        };
        emit_report(out, DiscoverOutput { report, keys: BTreeMap::new() });
        return Ok(0);
    }

    let mut member = match variant {
        ProtocolVariant::Keyserver => {
            let file: ContactListFile = read_json(contacts_path)?;
            let params = Arc::new(load_params(&config.data_dir)?);
            let keypair = load_dh_keypair(config, &params, &file.identity)?;
            let keys = transport_for(&config.key_server, "key-server")?;
            let proof = enrollment_secret(&config.data_dir, &file.identity)?;
            keyserver::enroll(&keys, &file.identity, &keypair, &proof)?;
            if phase == PhaseArg::Enroll {
                let report = DiscoveryReport {
                    identity: file.identity,
                    discovered: Vec::new(),
                    mode: DiscoveryMode::Static,
                    incomplete: false,
                };
                emit_report(out, DiscoverOutput { report, keys: BTreeMap::new() });
                return Ok(0);
            }
            let suite = params.suite;
            let mut member = MemberState::with_dh(params, file.identity.clone(), keypair, file.to_contacts()?)?;
            for contact in member.contacts().all() {
                let key = keyserver::fetch_key(&suite, &keys, &contact)?;
                member.set_peer_key(contact, key);
            }
            member
        }
        _ => load_member(config, contacts_path, cert)?.0,
    };
    if submit {
        incomplete |= tolerate_phase(member.submit_all(&matching), &mut incomplete)?.is_some_and(|failed| failed > 0);
    }
    if query {
        if let Some(o) = tolerate_phase(member.query_all(&matching), &mut incomplete)? {
            incomplete |= o.incomplete;
        }
    }

    let mut keys = BTreeMap::new();
    if publish_key.is_some() || fetch_keys {
        let directory = transport_for(&config.directory, "directory")?;
        if let Some(key) = publish_key {
            let key = parse_publish_key(&key)?;
            let owner = member.identity().clone();
            let proof = enrollment_secret(&config.data_dir, &owner)?;
            dir_put(&directory, &owner, &key, member.directory_gates()?, Vec::new(), &proof)?;
        }
        if fetch_keys {
            for contact in member.discovered() {
                let token = member.derive_directory_access_token(&contact)?;
                if let Some(key) = dir_get(&directory, &contact, &token)? {
                    keys.insert(contact, hex::encode(key));
                }
            }
        }
    }
    emit_report(out, DiscoverOutput { report: member.report(DiscoveryMode::Static, incomplete), keys });
    Ok(0)
}

fn emit_report(out: &Output, output: DiscoverOutput) {
    out.emit(&output, || {
        let r = &output.report;
        let mut lines = vec![format!("{}: {} mutual contact(s)", r.identity, r.discovered.len())];
        for id in &r.discovered {
            match output.keys.get(id) {
                Some(key) => lines.push(format!("  {id} key {key}")),
                None => lines.push(format!("  {id}")),
            }
        }
        if r.incomplete {
            lines.push("incomplete: some exchanges failed or the server was in another phase".into());
        }
        lines.join("\n")
    });
}

fn cmd_dynamic_watch(
    config: &CliConfig,
    out: &Output,
    contacts_path: &Path,
    cert: Option<PathBuf>,
    rounds: u64,
    interval_ms: u64,
) -> Result<i32> {
    let matching = matching_transport(config)?;
    let (mut member, _) = load_member(config, contacts_path, cert)?;
    let mut round = 0;
    loop {
        let o = member.dynamic_round(&matching)?;
        emit_report(
            out,
            DiscoverOutput { report: member.report(DiscoveryMode::Dynamic, o.incomplete), keys: BTreeMap::new() },
        );
        round += 1;
        if rounds != 0 && round >= rounds {
            return Ok(0);
        }
        std::thread::sleep(Duration::from_millis(interval_ms));
    }
}

fn cmd_delete_contact(
    config: &CliConfig,
    out: &Output,
    contacts_path: &Path,
    cert: Option<PathBuf>,
    contact: &Identity,
    publish_key: Option<String>,
) -> Result<i32> {
    let matching = matching_transport(config)?;
    let (mut member, mut file) = load_member(config, contacts_path, cert)?;
    let republish = match publish_key {
        Some(key) => {
            let directory = transport_for(&config.directory, "directory")?;
            let revoke = match member.contacts().visible().contains(contact) {
                true => vec![member.directory_gate(contact)?],
                false => Vec::new(),
            };
            Some((directory, parse_publish_key(&key)?, revoke))
        }
        None => None,
    };
    member.delete_contact(contact, &matching)?;
    if let Some((directory, key, revoke)) = republish {
        let owner = member.identity().clone();
        let proof = enrollment_secret(&config.data_dir, &owner)?;
        dir_put(&directory, &owner, &key, Vec::new(), revoke, &proof)?;
    }
    file.visible.retain(|c| c != contact);
    file.hidden.retain(|c| c != contact);
    write_json(contacts_path, &file)?;
    out.emit(&DeleteOutput { deleted: contact.clone() }, || format!("deleted {contact}"));
    Ok(0)
}

fn parse_publish_key(key: &str) -> Result<Vec<u8>> {
    hex::decode(key).map_err(|_| Error::InvalidParams("--publish-key must be hex".into()))
}

fn cmd_simulate(
    config: &CliConfig,
    out: &Output,
    name: Option<ScenarioName>,
    scenario_file: Option<PathBuf>,
    transport: Option<TransportKind>,
    report_path: Option<PathBuf>,
) -> Result<i32> {
    let seed = config.simulate_seed()?;
    let mut scenario = match (scenario_file, name) {
        (Some(path), name) => {
            let mut file: ScenarioFile = read_json(&path)?;
            file.name = name.or(file.name);
            file.seed = seed.or(file.seed);
            file.resolve()?
        }
        (None, Some(name)) => Scenario::preset(name, seed.unwrap_or(0)),
        (None, None) => return Err(Error::InvalidParams("give --scenario or --scenario-file".into())),
    };
    if let Some(t) = transport {
        scenario.transport = t;
    }
    let report = run_scenario(&scenario);
    if let Some(path) = report_path {
        fs::write(path, report.to_json() + "\n")?;
    }
    out.emit(&report, || {
        let verdict = match (report.valid, report.passed) {
            (false, _) => format!("INVALID ({})", report.error.as_deref().unwrap_or("unknown error")),
            (true, true) => "PASS".into(),
            (true, false) => "FAIL".into(),
        };
        let mut lines =
            vec![format!("{:?} seed {}: {verdict} in {} ms", report.scenario, report.seed, report.elapsed_ms)];
        lines.extend(report.divergences.iter().take(10).map(|d| format!("  {d}")));
        lines.join("\n")
    });
    Ok(if report.passed { 0 } else { 1 })
}
