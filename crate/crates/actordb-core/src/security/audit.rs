//! Append-only audit stream.
//!
//! Every security-relevant operation lands here: command verification
//! outcomes, queries, policy changes, key revocations, dead letters, and
//! promotion decisions. Sequence numbers are gap-free; the optional file
//! sink writes one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    CommandAccepted,
    CommandRejected,
    Query,
    PolicyChange,
    KeyRevoked,
    DeadLetter,
    PromotionDecision,
    TokenIssued,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditDecision {
    #[serde(rename = "allow")]
    Allow,
    #[serde(rename = "deny")]
    Deny,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp: i64,
    pub principal_id: String,
    pub action: AuditAction,
    pub resource: String,
    pub decision: AuditDecision,
    pub reason: String,
}

struct SinkState {
    records: Vec<AuditRecord>,
    file: Option<File>,
}

/// Append-only audit sink; appends are serialized so sequence numbers
/// stay gap-free.
pub struct AuditSink {
    state: Mutex<SinkState>,
}

impl Default for AuditSink {
    fn default() -> Self {
        AuditSink {
            state: Mutex::new(SinkState {
                records: Vec::new(),
                file: None,
            }),
        }
    }
}

impl AuditSink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sink that also appends JSON lines to the given file.
    pub fn with_file(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())?;
        Ok(AuditSink {
            state: Mutex::new(SinkState {
                records: Vec::new(),
                file: Some(file),
            }),
        })
    }

    pub fn emit(
        &self,
        timestamp: i64,
        principal_id: &str,
        action: AuditAction,
        resource: &str,
        decision: AuditDecision,
        reason: &str,
    ) -> u64 {
        let mut st = self.state.lock().expect("audit sink lock poisoned");
        let seq = st.records.len() as u64 + 1;
        let record = AuditRecord {
            seq,
            timestamp,
            principal_id: principal_id.to_string(),
            action,
            resource: resource.to_string(),
            decision,
            reason: reason.to_string(),
        };
        if let Some(file) = st.file.as_mut() {
            // Best-effort file sink; the in-memory stream stays authoritative.
            if let Ok(line) = serde_json::to_string(&record) {
                let _ = writeln!(file, "{line}");
            }
        }
        st.records.push(record);
        seq
    }

    /// Records with `seq >= from_seq`, ascending.
    pub fn read(&self, from_seq: u64) -> Vec<AuditRecord> {
        let st = self.state.lock().expect("audit sink lock poisoned");
        let from = from_seq.max(1) as usize;
        if from > st.records.len() {
            return Vec::new();
        }
        st.records[from - 1..].to_vec()
    }

    pub fn head_seq(&self) -> u64 {
        self.state.lock().expect("audit sink lock poisoned").records.len() as u64
    }

    pub fn count_action(&self, action: AuditAction) -> usize {
        let st = self.state.lock().expect("audit sink lock poisoned");
        st.records.iter().filter(|r| r.action == action).count()
    }
}
