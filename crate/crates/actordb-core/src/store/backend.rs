//! Pluggable storage backend contract.
//!
//! Both backends (volatile in-memory and single-file append log) must pass
//! the same conformance suite. The trait also exposes operation counters so
//! tests can assert access patterns — e.g. that event-type reads go through
//! the secondary index instead of scanning the feed, or that a denied query
//! never touches the backend.

use std::sync::atomic::{AtomicU64, Ordering};

use super::types::{EventRecord, Snapshot, StoreError};

/// Snapshot of backend operation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackendStats {
    pub append_calls: u64,
    pub read_global_calls: u64,
    pub read_actor_calls: u64,
    pub read_type_calls: u64,
    /// Records materialized across all reads. An index-backed lookup visits
    /// only matching records; a scan would visit everything.
    pub records_scanned: u64,
}

#[derive(Debug, Default)]
pub(crate) struct StatCounters {
    pub append_calls: AtomicU64,
    pub read_global_calls: AtomicU64,
    pub read_actor_calls: AtomicU64,
    pub read_type_calls: AtomicU64,
    pub records_scanned: AtomicU64,
}

impl StatCounters {
    pub fn snapshot(&self) -> BackendStats {
        BackendStats {
            append_calls: self.append_calls.load(Ordering::Relaxed),
            read_global_calls: self.read_global_calls.load(Ordering::Relaxed),
            read_actor_calls: self.read_actor_calls.load(Ordering::Relaxed),
            read_type_calls: self.read_type_calls.load(Ordering::Relaxed),
            records_scanned: self.records_scanned.load(Ordering::Relaxed),
        }
    }

    pub fn bump(counter: &AtomicU64, n: u64) {
        counter.fetch_add(n, Ordering::Relaxed);
    }
}

/// Storage backend operations contract.
///
/// The store layer above guarantees that `append_batch` is called with
/// fully-assigned records (sequence, global offset, ingest time) under a
/// single commit lock, so offsets arrive in strictly increasing order.
pub trait StorageBackend: Send + Sync {
    /// Persist a batch atomically; offsets are consecutive. Takes
    /// ownership: the records move into the backend's index.
    fn append_batch(&self, records: Vec<EventRecord>) -> Result<(), StoreError>;

    /// Records of one actor with `from_sequence <= sequence <= to_sequence`
    /// (unbounded when `to_sequence` is `None`), ascending by sequence.
    fn read_actor(
        &self,
        actor_id: &str,
        from_sequence: u64,
        to_sequence: Option<u64>,
    ) -> Vec<EventRecord>;

    /// Up to `limit` records with `global_offset >= from_offset`, ascending.
    fn read_global(&self, from_offset: u64, limit: usize) -> Vec<EventRecord>;

    /// Up to `limit` records of `event_type` with `global_offset >=
    /// from_offset`, ascending. Must be served from the type index.
    fn read_by_event_type(&self, event_type: &str, from_offset: u64, limit: usize)
        -> Vec<EventRecord>;

    fn save_snapshot(&self, snapshot: &Snapshot) -> Result<(), StoreError>;

    /// All retained snapshots for the actor, ascending by `up_to_sequence`.
    fn snapshots(&self, actor_id: &str) -> Vec<Snapshot>;

    /// Replace the actor's retained snapshot set (used by pruning).
    fn replace_snapshots(&self, actor_id: &str, keep: &[Snapshot]) -> Result<(), StoreError>;

    /// Highest committed global offset (0 when empty).
    fn max_global_offset(&self) -> u64;

    fn stats(&self) -> BackendStats;
}
