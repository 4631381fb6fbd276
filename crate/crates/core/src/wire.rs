//! Newline-delimited JSON wire protocol shared by all servers.
//!
//! Each request travels on its own connection: one request line, one
//! response line. Requests carry no sender identifier, session token or
//! sequence number.

use serde::{Deserialize, Serialize};

use crate::crypto::{AugmentedToken, TuplePair};
use crate::error::{Error, Result};

/// Requests larger than this are rejected as malformed.
pub const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Submit {
        t1: AugmentedToken,
        t2: AugmentedToken,
    },
    Query {
        t1: AugmentedToken,
        t2: AugmentedToken,
    },
    Delete {
        t1: AugmentedToken,
        t2: AugmentedToken,
    },
    Stats,
    AdvancePhase,
    SimpleSubmit {
        t: AugmentedToken,
    },
    SimpleQuery {
        t: AugmentedToken,
    },
    #[serde(rename = "getkey")]
    GetKey {
        id: String,
    },
    Enroll {
        id: String,
        key: String,
        proof: String,
    },
    DirPut {
        id: String,
        key: String,
        gates: Vec<AugmentedToken>,
        proof: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        revoke: Vec<AugmentedToken>,
    },
    DirGet {
        id: String,
        token: AugmentedToken,
    },
}

impl Request {
    pub fn submit(t: &TuplePair) -> Self {
        Request::Submit { t1: t.first, t2: t.second }
    }

    pub fn query(t: &TuplePair) -> Self {
        Request::Query { t1: t.first, t2: t.second }
    }

    pub fn delete(t: &TuplePair) -> Self {
        Request::Delete { t1: t.first, t2: t.second }
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            Request::Submit { .. } => "submit",
            Request::Query { .. } => "query",
            Request::Delete { .. } => "delete",
            Request::Stats => "stats",
            Request::AdvancePhase => "advance_phase",
            Request::SimpleSubmit { .. } => "simple_submit",
            Request::SimpleQuery { .. } => "simple_query",
            Request::GetKey { .. } => "getkey",
            Request::Enroll { .. } => "enroll",
            Request::DirPut { .. } => "dir_put",
            Request::DirGet { .. } => "dir_get",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| Error::Malformed(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    Phase,
    Mode,
    Rate,
    Unauthorized,
    Denied,
    /// The server could not make the operation durable.
    Internal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Ok { ok: bool },
    Matches { matches: Vec<TuplePair> },
    Stats { s_c: u64, s_mc: u64 },
    Present { present: bool },
    Key { key: String },
    Err { err: ErrorCode },
}

impl Response {
    pub fn ok() -> Self {
        Response::Ok { ok: true }
    }

    pub fn err(code: ErrorCode) -> Self {
        Response::Err { err: code }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| Error::Malformed(e.to_string()))
    }

    /// Converts an error response into [`Error::Server`].
    pub fn into_result(self) -> Result<Self> {
        match self {
            Response::Err { err } => Err(Error::Server(err)),
            other => Ok(other),
        }
    }
}

/// A request handler. Handlers see only the request itself.
pub trait Service: Send + Sync {
    fn handle(&self, request: Request) -> Response;

    /// Parses one request line and renders the response line.
    fn handle_line(&self, line: &str) -> String {
        match Request::from_line(line) {
            Ok(request) => self.handle(request).to_line(),
            Err(_) => Response::err(ErrorCode::Malformed).to_line(),
        }
    }
}

impl<S: Service + ?Sized> Service for std::sync::Arc<S> {
    fn handle(&self, request: Request) -> Response {
        (**self).handle(request)
    }

    fn handle_line(&self, line: &str) -> String {
        (**self).handle_line(line)
    }
}
