//! Mutual contact discovery.
//!
//! Two users learn that both use a service only if each has the other in
//! their contact list. Members derive a shared pairing token from their
//! identity-based certificates and submit hashed tuples to an untrusted
//! matching server, which can only pair up identical first components.
//!
//! Crate layout:
//! - [`crypto`]: groups, pairing, hashes, KDF
//! - [`authority`]: parameter setup and certificate issuance
//! - [`client`]: member-side protocol
//! - [`server`]: the matching server
//! - [`variants`]: the KDF-based and key-server-based alternatives
//! - [`directory`]: token-gated public key directory
//! - [`sim`]: deterministic simulation with an ideal-model oracle

pub mod authority;
pub mod cli;
pub mod client;
pub mod config;
pub mod crypto;
pub mod directory;
pub mod enrollment;
pub mod error;
pub mod net;
pub mod server;
pub mod sim;
pub mod variants;
pub mod wire;

pub use error::{Error, Result};
