//! Line-delimited JSON records exchanged with the execution harness.
//!
//! Each request is one line on the child's stdin; each response one line on
//! its stdout, echoing the request id.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::ExecStatus;

pub const PROTOCOL_VERSION: &str = "convertest-harness/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Version,
    Exec,
    Mutants,
    Canonicalize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub cmd: Command,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecPayload {
    pub solution: String,
    pub setup: String,
    pub test: String,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcePayload {
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMutant {
    pub mutant_id: String,
    pub source: String,
    pub operator: String,
    pub line: u32,
}

/// Union of all response shapes; fields not relevant to a command are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<ExecStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covered_lines: Option<BTreeSet<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutants: Option<Vec<WireMutant>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Request {
    pub fn new(id: u64, cmd: Command, payload: impl Serialize) -> Self {
        Request { id, cmd, payload: serde_json::to_value(payload).unwrap_or(serde_json::Value::Null) }
    }

    /// The request as one protocol line, including the trailing newline.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).unwrap_or_default();
        s.push('\n');
        s
    }
}
