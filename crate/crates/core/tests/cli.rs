use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use std::sync::Arc;

use mcd_core::authority::{Certificate, CertificateFile, ParamsFile, SystemParams};
use mcd_core::cli::{DeleteOutput, DiscoverOutput, IssueOutput, ListeningOutput, SetupOutput, StatsOutput};
use mcd_core::client::{ContactList, MemberState};
use mcd_core::crypto::Identity;
use mcd_core::directory::dir_get;
use mcd_core::net::TcpTransport;
use mcd_core::sim::Report;
use serde::de::DeserializeOwned;

const BIN: &str = env!("CARGO_BIN_EXE_mcd");

fn seed_hex() -> String {
    "5a".repeat(32)
}

fn mcd(cwd: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(cwd).args(args).env_clear().output().unwrap()
}

fn ok_json<T: DeserializeOwned>(out: Output) -> T {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("{e}: {text}"))
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(cwd: &Path, args: &[&str]) -> Self {
        let mut child = Command::new(BIN)
            .current_dir(cwd)
            .args(args)
            .args(["--listen", "127.0.0.1:0", "--json"])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let listening: ListeningOutput = serde_json::from_str(&line).unwrap();
        Server { child, addr: listening.listening }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A transparent-suite deployment with certificates for `ids`.
fn deployment(ids: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let seed = seed_hex();
    let _: SetupOutput =
        ok_json(mcd(dir.path(), &["--data-dir", "d", "--suite", "transparent", "--seed", &seed, "setup", "--json"]));
    let mut args = vec!["--data-dir", "d", "issue", "--json"];
    for id in ids {
        args.extend(["--id", id]);
    }
    let issued: IssueOutput = ok_json(mcd(dir.path(), &args));
    assert_eq!(issued.issued.len(), ids.len());
    dir
}

fn contacts(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn discover(dir: &Path, addr: &str, file: &str, extra: &[&str]) -> DiscoverOutput {
    let mut args = vec!["--data-dir", "d", "--server", addr, "discover", "--json", "--contacts", file];
    args.extend_from_slice(extra);
    ok_json(mcd(dir, &args))
}

fn names(out: &DiscoverOutput) -> Vec<String> {
    out.report.discovered.iter().map(|i| i.to_string()).collect()
}

#[test]
fn seeded_setup_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let seed = seed_hex();
    for d in ["one", "two"] {
        let _: SetupOutput = ok_json(mcd(dir.path(), &["--data-dir", d, "--seed", &seed, "setup", "--json"]));
    }
    let one = std::fs::read(dir.path().join("one/params.json")).unwrap();
    let two = std::fs::read(dir.path().join("two/params.json")).unwrap();
    assert_eq!(one, two);
    let params: ParamsFile = serde_json::from_slice(&one).unwrap();
    assert_eq!(params.version, "mcd-v1");

    let again = mcd(dir.path(), &["--data-dir", "one", "--seed", &seed, "setup"]);
    assert_eq!(again.status.code(), Some(1));
    let forced = mcd(dir.path(), &["--data-dir", "one", "--seed", &seed, "setup", "--force"]);
    assert!(forced.status.success());
    assert_eq!(std::fs::read(dir.path().join("one/params.json")).unwrap(), one);
}

#[test]
fn production_profile_refuses_seed_and_transparent_suite() {
    let dir = tempfile::tempdir().unwrap();
    let seed = seed_hex();
    let seeded = mcd(dir.path(), &["--seed", &seed, "setup", "--profile", "production"]);
    assert_eq!(seeded.status.code(), Some(1));
    let toy = mcd(dir.path(), &["--suite", "transparent", "setup", "--profile", "production"]);
    assert_eq!(toy.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2_and_operational_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["bogus"][..], &["setup", "--nope"], &["serve-match", "--mode", "sometimes"], &[]] {
        let out = mcd(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("Usage") || stderr.contains("--help"), "{args:?}");
    }
    let missing = mcd(dir.path(), &["--data-dir", "nothing-here", "issue", "--id", "+1"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let no_server = mcd(dir.path(), &["stats"]);
    assert_eq!(no_server.status.code(), Some(1));
    assert!(mcd(dir.path(), &["--help"]).status.success());
}

#[test]
fn issuance_closes_for_good() {
    let dir = deployment(&["+1"]);
    let closed: IssueOutput = ok_json(mcd(dir.path(), &["--data-dir", "d", "issue", "--close", "--json"]));
    assert!(closed.closed);
    let authority = std::fs::read_to_string(dir.path().join("d/authority.json")).unwrap();
    assert!(authority.contains("\"master\": null"));
    let out = mcd(dir.path(), &["--data-dir", "d", "issue", "--id", "+2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("closed"));
}

#[test]
fn discover_against_empty_submission_phase_server() {
    let dir = deployment(&["+1"]);
    contacts(dir.path(), "a.json", r#"{"identity":"+1","visible":["+2"]}"#);
    let server = Server::start(dir.path(), &["serve-match"]);
    let out = discover(dir.path(), &server.addr, "a.json", &[]);
    assert!(out.report.discovered.is_empty());
    assert!(out.report.incomplete);
    let query_only = discover(dir.path(), &server.addr, "a.json", &["--phase", "query"]);
    assert!(query_only.report.discovered.is_empty());
}

#[test]
fn static_flow_with_hidden_contact() {
    let dir = deployment(&["+1", "+2", "+3", "+4"]);
    contacts(dir.path(), "a.json", r#"{"identity":"+1","visible":["+2","+3","+4"]}"#);
    contacts(dir.path(), "b.json", r#"{"identity":"+2","visible":["+1"]}"#);
    contacts(dir.path(), "c.json", r#"{"identity":"+3","hidden":["+1"]}"#);
    contacts(dir.path(), "d.json", r#"{"identity":"+4","visible":["+2"]}"#);
    let server = Server::start(dir.path(), &["serve-match"]);
    let files = ["a.json", "b.json", "c.json", "d.json"];
    for f in files {
        assert!(discover(dir.path(), &server.addr, f, &["--phase", "submit"]).report.discovered.is_empty());
    }
    let stats: StatsOutput = ok_json(mcd(dir.path(), &["--server", &server.addr, "stats", "--json"]));
    assert_eq!(stats.s_c, 6);
    let _: serde_json::Value = ok_json(mcd(dir.path(), &["--server", &server.addr, "advance-phase", "--json"]));
    let late = mcd(
        dir.path(),
        &[
            "--data-dir",
            "d",
            "--server",
            &server.addr,
            "discover",
            "--contacts",
            "a.json",
            "--phase",
            "submit",
            "--json",
        ],
    );
    assert!(ok_json::<DiscoverOutput>(late).report.incomplete);

    let got: Vec<_> =
        files.iter().map(|f| names(&discover(dir.path(), &server.addr, f, &["--phase", "query"]))).collect();
    assert_eq!(got, vec![vec!["+2"], vec!["+1"], vec!["+1"], vec![]]);
}

#[test]
fn dynamic_watch_and_delete() {
    let dir = deployment(&["+1", "+2"]);
    contacts(dir.path(), "a.json", r#"{"identity":"+1","visible":["+2"]}"#);
    contacts(dir.path(), "b.json", r#"{"identity":"+2","visible":["+1"]}"#);
    let server = Server::start(dir.path(), &["serve-match", "--mode", "dynamic"]);
    let watch = |file: &str| -> DiscoverOutput {
        ok_json(mcd(
            dir.path(),
            &["--data-dir", "d", "--server", &server.addr, "dynamic-watch", "--json", "--contacts", file],
        ))
    };
    assert!(watch("a.json").report.discovered.is_empty());
    assert_eq!(names(&watch("b.json")), vec!["+1"]);
    assert_eq!(names(&watch("a.json")), vec!["+2"]);

    let deleted: DeleteOutput = ok_json(mcd(
        dir.path(),
        &[
            "--data-dir",
            "d",
            "--server",
            &server.addr,
            "delete-contact",
            "--json",
            "--contacts",
            "a.json",
            "--contact",
            "+2",
        ],
    ));
    assert_eq!(deleted.deleted.as_str(), "+2");
    let file = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    assert!(!file.contains("+2"));

    contacts(dir.path(), "b2.json", r#"{"identity":"+2","visible":["+1"]}"#);
    assert!(watch("b2.json").report.discovered.is_empty());
}

#[test]
fn simple_and_keyserver_variants() {
    let dir = deployment(&["+1", "+2", "+3"]);
    contacts(dir.path(), "a.json", r#"{"identity":"+1","visible":["+2","+3"]}"#);
    contacts(dir.path(), "b.json", r#"{"identity":"+2","visible":["+1"]}"#);
    contacts(dir.path(), "c.json", r#"{"identity":"+3","visible":["+2"]}"#);
    let files = ["a.json", "b.json", "c.json"];
    let expected = vec![vec!["+2"], vec!["+1"], vec![]];

    let simple = Server::start(dir.path(), &["serve-match", "--variant", "simple"]);
    for f in files {
        discover(dir.path(), &simple.addr, f, &["--variant", "simple", "--phase", "submit"]);
    }
    mcd(dir.path(), &["--server", &simple.addr, "advance-phase"]);
    let got: Vec<_> = files
        .iter()
        .map(|f| names(&discover(dir.path(), &simple.addr, f, &["--variant", "simple", "--phase", "query"])))
        .collect();
    assert_eq!(got, expected);

    let matching = Server::start(dir.path(), &["serve-match"]);
    let keys = Server::start(dir.path(), &["--data-dir", "d", "serve-keys"]);
    let ks = ["--variant", "keyserver", "--key-server", keys.addr.as_str()];
    for f in files {
        discover(dir.path(), &matching.addr, f, &[&ks[..], &["--phase", "enroll"]].concat());
    }
    for f in files {
        discover(dir.path(), &matching.addr, f, &[&ks[..], &["--phase", "submit"]].concat());
    }
    mcd(dir.path(), &["--server", &matching.addr, "advance-phase"]);
    let got: Vec<_> = files
        .iter()
        .map(|f| names(&discover(dir.path(), &matching.addr, f, &[&ks[..], &["--phase", "query"]].concat())))
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn directory_publish_and_fetch() {
    let dir = deployment(&["+1", "+2", "+3"]);
    contacts(dir.path(), "a.json", r#"{"identity":"+1","visible":["+2","+3"]}"#);
    contacts(dir.path(), "b.json", r#"{"identity":"+2","visible":["+1"]}"#);
    contacts(dir.path(), "c.json", r#"{"identity":"+3","visible":["+2"]}"#);
    let matching = Server::start(dir.path(), &["serve-match"]);
    let directory = Server::start(dir.path(), &["--data-dir", "d", "serve-dir"]);
    let dir_flag = ["--directory", directory.addr.as_str()];
    for (f, key) in [("a.json", "aa01"), ("b.json", "bb02"), ("c.json", "cc03")] {
        discover(
            dir.path(),
            &matching.addr,
            f,
            &[&dir_flag[..], &["--phase", "submit", "--publish-key", key]].concat(),
        );
    }
    mcd(dir.path(), &["--server", &matching.addr, "advance-phase"]);
    let a = discover(
        dir.path(),
        &matching.addr,
        "a.json",
        &[&dir_flag[..], &["--phase", "query", "--fetch-keys"]].concat(),
    );
    let b = discover(
        dir.path(),
        &matching.addr,
        "b.json",
        &[&dir_flag[..], &["--phase", "query", "--fetch-keys"]].concat(),
    );
    let c = discover(
        dir.path(),
        &matching.addr,
        "c.json",
        &[&dir_flag[..], &["--phase", "query", "--fetch-keys"]].concat(),
    );
    assert_eq!(
        a.keys.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<Vec<_>>(),
        vec![("+2".into(), "bb02".into())]
    );
    assert_eq!(
        b.keys.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<Vec<_>>(),
        vec![("+1".into(), "aa01".into())]
    );
    assert!(c.keys.is_empty());
}

#[test]
fn delete_contact_revokes_its_directory_gate() {
    let dir = deployment(&["+1", "+2"]);
    contacts(dir.path(), "a.json", r#"{"identity":"+1","visible":["+2"]}"#);
    contacts(dir.path(), "b.json", r#"{"identity":"+2","visible":["+1"]}"#);
    let matching = Server::start(dir.path(), &["serve-match", "--mode", "dynamic"]);
    let directory = Server::start(dir.path(), &["--data-dir", "d", "serve-dir"]);
    let dir_flag = ["--directory", directory.addr.as_str()];
    discover(
        dir.path(),
        &matching.addr,
        "a.json",
        &[&dir_flag[..], &["--phase", "query", "--publish-key", "aa01"]].concat(),
    );

    let d = dir.path().join("d");
    let read = |p: PathBuf| std::fs::read_to_string(p).unwrap();
    let params: ParamsFile = serde_json::from_str(&read(d.join("params.json"))).unwrap();
    let params = Arc::new(SystemParams::from_file(&params).unwrap());
    let cert: CertificateFile = serde_json::from_str(&read(d.join("certs/+2.json"))).unwrap();
    let cert = Certificate::from_file(&params.suite, &cert).unwrap();
    let one = Identity::new("+1").unwrap();
    let contacts = ContactList::new(&cert.identity, [one.clone()], []).unwrap();
    let mut b = MemberState::new(params, cert, contacts).unwrap();
    let (_, token) = b.make_query(&one).unwrap();
    let transport = TcpTransport::new(directory.addr.as_str()).unwrap();
    assert_eq!(dir_get(&transport, &one, &token).unwrap(), Some(vec![0xaa, 0x01]));

    let args = ["--data-dir", "d", "--server", &matching.addr, "--directory", &directory.addr, "delete-contact"];
    let deleted: DeleteOutput = ok_json(mcd(
        dir.path(),
        &[&args[..], &["--contacts", "a.json", "--contact", "+2", "--publish-key", "aa01", "--json"]].concat(),
    ));
    assert_eq!(deleted.deleted.to_string(), "+2");
    assert_eq!(dir_get(&transport, &one, &token).unwrap(), None);
}

#[test]
fn simulate_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcd(dir.path(), &["simulate", "--scenario", "honest_static", "--seed", "7", "--out", "r.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report: Report = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(report.passed && report.valid);
    assert_eq!(report.seed, 7);

    std::fs::write(dir.path().join("s.json"), r#"{"name":"replay","suite":"transparent"}"#).unwrap();
    let report: Report = ok_json(mcd(dir.path(), &["simulate", "--scenario-file", "s.json", "--seed", "3", "--json"]));
    assert!(report.passed);
    assert_eq!(report.seed, 3);

    std::fs::write(dir.path().join("bad.json"), r#"{"name":"honest_dynamic","variant":"simple"}"#).unwrap();
    let invalid = mcd(dir.path(), &["simulate", "--scenario-file", "bad.json"]);
    assert_eq!(invalid.status.code(), Some(1));
}

#[test]
fn environment_and_config_file_forms() {
    let dir = tempfile::tempdir().unwrap();
    let seed = seed_hex();
    let via_env = Command::new(BIN)
        .current_dir(dir.path())
        .args(["setup"])
        .env_clear()
        .env("MCD_DATA_DIR", "env-dir")
        .env("MCD_SEED", &seed)
        .env("MCD_SUITE", "transparent")
        .output()
        .unwrap();
    assert!(via_env.status.success());
    std::fs::write(
        dir.path().join("mcd.json"),
        format!(r#"{{"data_dir":"file-dir","seed":"{seed}","suite":"transparent"}}"#),
    )
    .unwrap();
    assert!(mcd(dir.path(), &["setup"]).status.success());
    assert!(mcd(dir.path(), &["--data-dir", "flag-dir", "--seed", &seed, "--suite", "transparent", "setup"])
        .status
        .success());
    let read = |d: &str| std::fs::read(dir.path().join(d).join("params.json")).unwrap();
    assert_eq!(read("env-dir"), read("file-dir"));
    assert_eq!(read("env-dir"), read("flag-dir"));
    let params: ParamsFile = serde_json::from_slice(&read("file-dir")).unwrap();
    assert_eq!(params.q, "1fffffffffffffff");
}
