//! Transcript recording and inspection for simulated traffic.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::crypto::{is_hex64, Identity};
use crate::error::Result;
use crate::net::Transport;
use crate::wire::{Request, Response};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptStats {
    pub messages: u64,
    pub request_bytes: u64,
    pub response_bytes: u64,
}

#[derive(Default)]
struct Transcript {
    stats: TranscriptStats,
    lines: Vec<String>,
}

/// Wraps a transport and records what crosses it. Each exchange is one
/// message on its own connection, so the message count equals the
/// connection count.
pub struct RecordingTransport<T> {
    inner: T,
    keep_lines: bool,
    transcript: Mutex<Transcript>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, keep_lines: bool) -> Self {
        RecordingTransport { inner, keep_lines, transcript: Mutex::new(Transcript::default()) }
    }

    pub fn stats(&self) -> TranscriptStats {
        self.transcript.lock().unwrap().stats
    }

    /// Request lines, in arrival order.
    pub fn lines(&self) -> Vec<String> {
        self.transcript.lock().unwrap().lines.clone()
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn exchange(&self, request: &Request) -> Result<Response> {
        let line = request.to_line();
        let response = self.inner.exchange(request)?;
        let mut t = self.transcript.lock().unwrap();
        t.stats.messages += 1;
        t.stats.request_bytes += line.len() as u64 + 1;
        t.stats.response_bytes += response.to_line().len() as u64 + 1;
        if self.keep_lines {
            t.lines.push(line);
        }
        Ok(response)
    }
}

/// Checks matching-server request lines: each must be a JSON object holding
/// only an op name and hex64 strings, and no identity may appear in any form.
pub fn scan_transcript(lines: &[String], identities: &[Identity]) -> Vec<String> {
    let mut problems = Vec::new();
    let needles: Vec<(String, String)> =
        identities.iter().map(|i| (i.to_string(), hex::encode(i.as_bytes()))).collect();
    for (n, line) in lines.iter().enumerate() {
        let Ok(serde_json::Value::Object(obj)) = serde_json::from_str::<serde_json::Value>(line) else {
            problems.push(format!("line {}: not a JSON object", n + 1));
            continue;
        };
        for (key, value) in &obj {
            let ok = match (key.as_str(), value) {
                ("op", serde_json::Value::String(op)) => {
                    ["submit", "query", "delete", "stats", "advance_phase"].contains(&op.as_str())
                }
                ("t1" | "t2", serde_json::Value::String(h)) => is_hex64(h),
                _ => false,
            };
            if !ok {
                problems.push(format!("line {}: unexpected field {key}={value}", n + 1));
            }
        }
        for (plain, hexed) in &needles {
            if line.contains(plain.as_str()) || line.contains(hexed.as_str()) {
                problems.push(format!("line {}: contains identity {plain}", n + 1));
            }
        }
    }
    problems
}
