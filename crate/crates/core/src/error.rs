use std::io;

use crate::wire::ErrorCode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid identity: {0}")]
    InvalidIdentity(String),
    #[error("operands come from different group suites")]
    SuiteMismatch,
    #[error("point is in the wrong source group slot")]
    SlotMismatch,
    #[error("invalid group element encoding")]
    InvalidEncoding,
    #[error("degenerate group element (identity)")]
    DegenerateElement,
    #[error("hash-to-group exhausted its attempt budget; suite is broken")]
    HashToGroupExhausted,
    #[error("part of {0} bytes exceeds the length prefix range")]
    OversizedPart(usize),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("policy violation: {0}")]
    Policy(String),
    #[error("certificate issuance is closed (master secret erased)")]
    IssuanceClosed,
    #[error("unauthorized")]
    Unauthorized,
    #[error("a member cannot list itself as a contact")]
    SelfContact,
    #[error("{0} is not in the contact list")]
    UnknownContact(String),
    #[error("{0} has not been discovered")]
    NotDiscovered(String),
    #[error("no public key fetched for {0}")]
    MissingPeerKey(String),
    #[error("server rejected request: {0:?}")]
    Server(ErrorCode),
    #[error("unexpected response from server")]
    UnexpectedResponse,
    #[error("transport: {0}")]
    Transport(String),
    #[error("log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Transport failures may be retried on a fresh connection.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
