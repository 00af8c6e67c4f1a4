//! Append-only, per-actor single-writer event store.
//!
//! Appends to one actor are serialized (per-actor linearizability) while
//! appends to distinct actors proceed concurrently up to a short commit
//! section that assigns the store-wide total order. Reads never block
//! appends and observe only committed records.

mod backend;
mod filelog;
mod memory;
mod types;

pub use backend::{BackendStats, StorageBackend};
pub use filelog::{read_framed, FileLogBackend, LOG_MAGIC};
pub use memory::MemoryBackend;
pub use types::{
    AppendReceipt, EventRecord, NewEvent, RetentionPolicy, Snapshot, StoreError, MAX_ACTOR_ID_LEN,
};

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::scalar::Scalar;
use crate::time::Clock;

#[derive(Debug, Default)]
struct ActorMeta {
    max_sequence: u64,
    /// command_id -> range of the append that committed it.
    receipts: HashMap<String, AppendReceipt>,
}

struct CommitState {
    next_offset: u64,
    last_ingest: i64,
}

/// Event store facade over a pluggable backend.
pub struct EventStore {
    backend: Arc<dyn StorageBackend>,
    actors: Mutex<HashMap<String, Arc<Mutex<ActorMeta>>>>,
    commit: Mutex<CommitState>,
    clock: Arc<dyn Clock>,
}

impl EventStore {
    /// Open a store over a backend, rebuilding actor metadata from any
    /// records the backend already holds.
    pub fn open(backend: Arc<dyn StorageBackend>, clock: Arc<dyn Clock>) -> Self {
        let mut actors: HashMap<String, ActorMeta> = HashMap::new();
        let mut last_ingest = 0i64;
        let mut offset = 1u64;
        loop {
            let batch = backend.read_global(offset, 8192);
            if batch.is_empty() {
                break;
            }
            for record in &batch {
                let meta = actors.entry(record.actor_id.clone()).or_default();
                meta.max_sequence = meta.max_sequence.max(record.sequence);
                meta.receipts.insert(
                    record.command_id.clone(),
                    AppendReceipt {
                        first_sequence: record.sequence,
                        last_sequence: record.sequence,
                        last_global_offset: record.global_offset,
                    },
                );
                last_ingest = last_ingest.max(record.ingest_time);
                offset = record.global_offset + 1;
            }
        }

        EventStore {
            backend,
            actors: Mutex::new(
                actors
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(Mutex::new(v))))
                    .collect(),
            ),
            commit: Mutex::new(CommitState {
                next_offset: offset,
                last_ingest,
            }),
            clock,
        }
    }

    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::open(Arc::new(MemoryBackend::new()), clock)
    }

    fn actor_meta(&self, actor_id: &str) -> Arc<Mutex<ActorMeta>> {
        let mut map = self.actors.lock().expect("actor map lock poisoned");
        map.entry(actor_id.to_string()).or_default().clone()
    }

    /// Append a batch of events to one actor.
    ///
    /// `expected_sequence` is the optimistic-concurrency check: it must
    /// equal the actor's current max sequence (0 for a new actor). All
    /// events commit atomically with consecutive sequences and consecutive
    /// global offsets.
    pub fn append(
        &self,
        actor_id: &str,
        expected_sequence: Option<u64>,
        events: Vec<NewEvent>,
    ) -> Result<AppendReceipt, StoreError> {
        if actor_id.is_empty() {
            return Err(StoreError::InvalidArgument("actor_id must be non-empty".into()));
        }
        if actor_id.len() > MAX_ACTOR_ID_LEN {
            return Err(StoreError::InvalidArgument(format!(
                "actor_id exceeds {MAX_ACTOR_ID_LEN} bytes"
            )));
        }
        if events.is_empty() {
            return Err(StoreError::InvalidArgument("event batch must be non-empty".into()));
        }
        for event in &events {
            if event.event_type.is_empty() {
                return Err(StoreError::InvalidArgument("event_type must be non-empty".into()));
            }
            for (field, value) in &event.payload {
                if let Scalar::Float(f) = value {
                    if !f.is_finite() {
                        return Err(StoreError::InvalidArgument(format!(
                            "payload field {field:?} holds a non-finite float"
                        )));
                    }
                }
            }
        }

        let meta_arc = self.actor_meta(actor_id);
        let mut meta = meta_arc.lock().expect("actor lock poisoned");

        // Idempotent retry: any already-committed command_id short-circuits.
        for event in &events {
            if let Some(receipt) = meta.receipts.get(&event.command_id) {
                return Err(StoreError::DuplicateCommand {
                    command_id: event.command_id.clone(),
                    receipt: *receipt,
                });
            }
        }

        if let Some(expected) = expected_sequence {
            if expected != meta.max_sequence {
                return Err(StoreError::SequenceConflict {
                    actor_id: actor_id.to_string(),
                    expected,
                    actual: meta.max_sequence,
                });
            }
        }

        let first_sequence = meta.max_sequence + 1;
        let mut records: Vec<EventRecord> = events
            .into_iter()
            .enumerate()
            .map(|(i, event)| EventRecord {
                actor_id: actor_id.to_string(),
                sequence: first_sequence + i as u64,
                global_offset: 0,
                event_type: event.event_type,
                event_time: event.event_time,
                ingest_time: 0,
                payload: event.payload,
                command_id: event.command_id,
            })
            .collect();

        let receipt = {
            let mut commit = self.commit.lock().expect("commit lock poisoned");
            commit.last_ingest = commit.last_ingest.max(self.clock.now_ms());
            for (i, record) in records.iter_mut().enumerate() {
                record.global_offset = commit.next_offset + i as u64;
                record.ingest_time = commit.last_ingest;
            }
            let count = records.len() as u64;
            let command_ids: Vec<String> =
                records.iter().map(|r| r.command_id.clone()).collect();
            self.backend.append_batch(records)?;
            commit.next_offset += count;
            let receipt = AppendReceipt {
                first_sequence,
                last_sequence: first_sequence + count - 1,
                last_global_offset: commit.next_offset - 1,
            };
            (receipt, command_ids)
        };
        let (receipt, command_ids) = receipt;

        meta.max_sequence = receipt.last_sequence;
        for command_id in command_ids {
            meta.receipts.insert(command_id, receipt);
        }
        Ok(receipt)
    }

    /// Records of one actor in ascending sequence order; empty for an
    /// unknown actor.
    pub fn read_stream(
        &self,
        actor_id: &str,
        from_sequence: u64,
        to_sequence: Option<u64>,
    ) -> Result<Vec<EventRecord>, StoreError> {
        if from_sequence < 1 {
            return Err(StoreError::InvalidArgument("from_sequence must be >= 1".into()));
        }
        if let Some(to) = to_sequence {
            if from_sequence > to {
                return Err(StoreError::InvalidArgument(format!(
                    "from_sequence {from_sequence} > to_sequence {to}"
                )));
            }
        }
        Ok(self.backend.read_actor(actor_id, from_sequence, to_sequence))
    }

    /// The total-order feed, interleaving actors in commit order.
    pub fn read_global(&self, from_offset: u64, limit: usize) -> Vec<EventRecord> {
        self.backend.read_global(from_offset, limit)
    }

    pub fn read_by_event_type(
        &self,
        event_type: &str,
        from_offset: u64,
        limit: usize,
    ) -> Vec<EventRecord> {
        self.backend.read_by_event_type(event_type, from_offset, limit)
    }

    pub fn save_snapshot(
        &self,
        actor_id: &str,
        up_to_sequence: u64,
        state: crate::scalar::Document,
    ) -> Result<Snapshot, StoreError> {
        let max = self.actor_max_sequence(actor_id);
        if up_to_sequence == 0 || up_to_sequence > max {
            return Err(StoreError::InvalidArgument(format!(
                "snapshot up_to_sequence {up_to_sequence} is ahead of stream head {max}"
            )));
        }
        if let Some(latest) = self.backend.snapshots(actor_id).last() {
            if up_to_sequence <= latest.up_to_sequence {
                return Err(StoreError::InvalidArgument(format!(
                    "snapshot up_to_sequence {up_to_sequence} does not advance past {}",
                    latest.up_to_sequence
                )));
            }
        }
        let snapshot = Snapshot {
            actor_id: actor_id.to_string(),
            up_to_sequence,
            state,
            created_at: self.clock.now_ms(),
        };
        self.backend.save_snapshot(&snapshot)?;
        Ok(snapshot)
    }

    pub fn load_latest_snapshot(&self, actor_id: &str) -> Option<Snapshot> {
        self.backend.snapshots(actor_id).into_iter().last()
    }

    /// Keep the newest `keep_last_n` snapshots; returns how many were
    /// removed.
    pub fn prune_snapshots(
        &self,
        actor_id: &str,
        policy: &RetentionPolicy,
    ) -> Result<usize, StoreError> {
        let all = self.backend.snapshots(actor_id);
        let keep_n = policy.keep_last_n.max(1) as usize;
        if all.len() <= keep_n {
            return Ok(0);
        }
        let removed = all.len() - keep_n;
        let keep = &all[removed..];
        self.backend.replace_snapshots(actor_id, keep)?;
        Ok(removed)
    }

    pub fn actor_max_sequence(&self, actor_id: &str) -> u64 {
        let map = self.actors.lock().expect("actor map lock poisoned");
        map.get(actor_id)
            .map(|m| m.lock().expect("actor lock poisoned").max_sequence)
            .unwrap_or(0)
    }

    /// All actor ids seen by this store, sorted.
    pub fn actor_ids(&self) -> Vec<String> {
        let map = self.actors.lock().expect("actor map lock poisoned");
        let mut ids: Vec<String> = map.keys().cloned().collect();
        ids.sort_unstable();
        ids
    }

    pub fn max_global_offset(&self) -> u64 {
        self.backend.max_global_offset()
    }

    pub fn stats(&self) -> BackendStats {
        self.backend.stats()
    }
}
