//! Core record types for the append-only event store.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Document;

/// Maximum length of an actor id in bytes.
pub const MAX_ACTOR_ID_LEN: usize = 256;

/// One immutable fact in an actor's stream.
///
/// `sequence` is per-actor, gap-free, starting at 1. `global_offset` is the
/// store-wide total order in commit order. `event_time` is business time
/// (late events are legal); `ingest_time` is assigned from the store clock
/// at append and is non-decreasing in `global_offset` order. Both are UTC
/// epoch milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub actor_id: String,
    pub sequence: u64,
    pub global_offset: u64,
    pub event_type: String,
    pub event_time: i64,
    pub ingest_time: i64,
    pub payload: Document,
    pub command_id: String,
}

/// An event proposed for append; the store assigns sequence, offset, and
/// ingest time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewEvent {
    pub event_type: String,
    pub event_time: i64,
    pub payload: Document,
    pub command_id: String,
}

impl NewEvent {
    pub fn new(event_type: &str, event_time: i64, payload: Document, command_id: &str) -> Self {
        NewEvent {
            event_type: event_type.to_string(),
            event_time,
            payload,
            command_id: command_id.to_string(),
        }
    }
}

/// Committed range returned by a successful append.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppendReceipt {
    pub first_sequence: u64,
    pub last_sequence: u64,
    pub last_global_offset: u64,
}

/// Point-in-time actor state used to shorten hydration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub actor_id: String,
    pub up_to_sequence: u64,
    pub state: Document,
    pub created_at: i64,
}

/// Snapshot retention knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetentionPolicy {
    pub keep_last_n: u64,
    pub min_events_between_snapshots: u64,
}

impl Default for RetentionPolicy {
    fn default() -> Self {
        RetentionPolicy {
            keep_last_n: 2,
            min_events_between_snapshots: 1000,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    /// expected_sequence did not match the actor's current head: a
    /// concurrent writer won. Re-read and retry.
    #[error("sequence conflict on actor {actor_id:?}: expected {expected}, actual {actual}")]
    SequenceConflict {
        actor_id: String,
        expected: u64,
        actual: u64,
    },

    /// command_id already present in this actor's stream: an idempotent
    /// retry. Carries the originally committed range; nothing was appended.
    #[error("duplicate command {command_id:?}")]
    DuplicateCommand {
        command_id: String,
        receipt: AppendReceipt,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt log: {0}")]
    Corrupt(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}
