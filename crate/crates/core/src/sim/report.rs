use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::Identity;
use crate::server::ServerStats;
use crate::sim::adversary::AdversaryCounters;
use crate::sim::scenario::{ProtocolVariant, Scenario, ScenarioName};
use crate::sim::transport::TranscriptStats;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: ScenarioName,
    pub seed: u64,
    pub variant: ProtocolVariant,
    /// False when the run could not be carried out (bad parameters,
    /// infrastructure failure); such a run neither passes nor fails.
    pub valid: bool,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub members: usize,
    pub outputs: BTreeMap<Identity, BTreeSet<Identity>>,
    pub expected: BTreeMap<Identity, BTreeSet<Identity>>,
    pub server_stats: Option<ServerStats>,
    pub expected_stats: Option<ServerStats>,
    pub checks: Vec<Check>,
    pub divergences: Vec<String>,
    pub transcript: TranscriptStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryCounters>,
    pub elapsed_ms: u64,
}

impl Report {
    pub fn new(s: &Scenario) -> Self {
        Report {
            scenario: s.name,
            seed: s.seed,
            variant: s.variant,
            valid: true,
            passed: false,
            error: None,
            members: 0,
            outputs: BTreeMap::new(),
            expected: BTreeMap::new(),
            server_stats: None,
            expected_stats: None,
            checks: Vec::new(),
            divergences: Vec::new(),
            transcript: TranscriptStats::default(),
            adversary: None,
            elapsed_ms: 0,
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        let detail = detail.into();
        if !passed {
            self.divergences.push(if detail.is_empty() { name.to_owned() } else { format!("{name}: {detail}") });
        }
        self.checks.push(Check { name: name.to_owned(), passed, detail });
    }

    /// Records per-member differences between `outputs` and `expected`.
    pub fn compare_outputs(&mut self, name: &str) {
        let mut diffs = Vec::new();
        let members: BTreeSet<_> = self.outputs.keys().chain(self.expected.keys()).cloned().collect();
        let empty = BTreeSet::new();
        for m in members {
            let got = self.outputs.get(&m).unwrap_or(&empty);
            let want = self.expected.get(&m).unwrap_or(&empty);
            for x in got.difference(want) {
                diffs.push(format!("{m} output {x} unexpectedly"));
            }
            for x in want.difference(got) {
                diffs.push(format!("{m} missed {x}"));
            }
        }
        let detail = match diffs.len() {
            0 => String::new(),
            n => format!("{n} differences, first: {}", diffs[0]),
        };
        self.check(name, diffs.is_empty(), detail);
        self.divergences.extend(diffs.into_iter().skip(1).take(100));
    }

    pub fn finish(&mut self, elapsed: std::time::Duration) {
        self.elapsed_ms = elapsed.as_millis() as u64;
        self.passed = self.valid && self.divergences.is_empty() && self.checks.iter().all(|c| c.passed);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
