//! Deterministic simulation: graph generation, an ideal-model oracle,
//! transcript recording, a lying server, and scenario runs.

pub mod adversary;
pub mod graph;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod transport;

pub use graph::{gen_graph, GraphParams, SocialGraph};
pub use oracle::{ideal_oracle, OracleExpectation};
pub use report::{Check, Report};
pub use scenario::{run_scenario, ProtocolVariant, Scenario, ScenarioFile, ScenarioName, SuiteChoice, TransportKind};
