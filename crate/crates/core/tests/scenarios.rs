use mcd_core::sim::{run_scenario, Scenario, ScenarioFile, ScenarioName, SuiteChoice, TransportKind};

fn run(s: &Scenario) {
    let report = run_scenario(s);
    assert!(report.valid, "{:?} invalid: {:?}", s.name, report.error);
    assert!(report.passed, "{:?} failed: {:#?}", s.name, report.divergences);
    eprintln!("{:?}: {} ms", s.name, report.elapsed_ms);
}

#[test]
fn every_preset_passes_on_the_production_suite() {
    use ScenarioName::*;
    for name in [
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
    ] {
        run(&Scenario::preset(name, 7));
    }
}

#[test]
fn socket_transport_gives_the_same_outputs() {
    let mut s = Scenario::preset(ScenarioName::HonestStatic, 3);
    s.suite = SuiteChoice::Transparent;
    let in_process = run_scenario(&s);
    s.transport = TransportKind::Socket;
    let socket = run_scenario(&s);
    assert!(in_process.passed && socket.passed);
    assert_eq!(in_process.outputs, socket.outputs);
    assert_eq!(in_process.server_stats, socket.server_stats);
}

#[test]
fn outputs_do_not_depend_on_worker_count_or_padding() {
    let mut s = Scenario::preset(ScenarioName::HonestStatic, 11);
    s.suite = SuiteChoice::Transparent;
    let base = run_scenario(&s);
    s.workers = 1;
    let single = run_scenario(&s);
    s.workers = 8;
    s.pad_responses = true;
    let padded = run_scenario(&s);
    assert!(base.passed && single.passed && padded.passed);
    assert_eq!(base.outputs, single.outputs);
    assert_eq!(base.outputs, padded.outputs);
}

#[test]
fn restart_from_log_keeps_outputs() {
    let mut s = Scenario::preset(ScenarioName::HonestStatic, 5);
    s.suite = SuiteChoice::Transparent;
    let plain = run_scenario(&s);
    s.restart_from_log = true;
    let restarted = run_scenario(&s);
    assert!(plain.passed && restarted.passed, "{:?}", restarted.divergences);
    assert_eq!(plain.outputs, restarted.outputs);
    assert_eq!(plain.server_stats, restarted.server_stats);
}

#[test]
fn dropped_matches_are_accounted() {
    let mut s = Scenario::preset(ScenarioName::MaliciousServer, 2);
    s.suite = SuiteChoice::Transparent;
    s.adversary.drop = 5;
    for seed in 0..5 {
        s.seed = seed;
        run(&s);
    }
}

#[test]
fn invalid_combinations_are_reported_invalid() {
    let mut s = Scenario::preset(ScenarioName::HonestDynamic, 1);
    s.variant = mcd_core::sim::ProtocolVariant::Simple;
    let report = run_scenario(&s);
    assert!(!report.valid && !report.passed);
}

#[test]
fn scenario_files_override_presets() {
    let file: ScenarioFile =
        serde_json::from_str(r#"{"name":"malicious_server","seed":4,"suite":"transparent"}"#).unwrap();
    let s = file.resolve().unwrap();
    assert_eq!(s.adversary.inject, 10_000);
    assert_eq!(s.suite, SuiteChoice::Transparent);
    assert!(serde_json::from_str::<ScenarioFile>(r#"{"name":"replay","bogus":1}"#).is_err());
}
