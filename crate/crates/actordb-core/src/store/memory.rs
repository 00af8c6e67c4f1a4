//! Volatile in-memory backend: a record vector plus actor, event-type, and
//! snapshot indexes. Also serves as the live index shared by the file-log
//! backend.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use super::backend::{BackendStats, StatCounters, StorageBackend};
use super::types::{EventRecord, Snapshot, StoreError};

#[derive(Debug, Default)]
struct IndexState {
    /// Record at index i has global_offset i+1 (offsets are gap-free).
    events: Vec<Arc<EventRecord>>,
    /// actor_id -> global offsets in sequence order. Entry at index j holds
    /// the offset of sequence j+1 (sequences are gap-free).
    actors: HashMap<String, Vec<u64>>,
    /// event_type -> global offsets ascending.
    types: HashMap<String, Vec<u64>>,
    /// actor_id -> snapshots ascending by up_to_sequence.
    snapshots: HashMap<String, Vec<Snapshot>>,
}

/// Shared in-memory index over committed records.
#[derive(Debug, Default)]
pub(crate) struct MemIndex {
    state: RwLock<IndexState>,
    counters: StatCounters,
}

impl MemIndex {
    pub fn insert_batch(&self, records: Vec<EventRecord>) {
        let mut st = self.state.write().expect("store index lock poisoned");
        for record in records {
            let arc = Arc::new(record);
            debug_assert_eq!(arc.global_offset as usize, st.events.len() + 1);
            st.actors
                .entry(arc.actor_id.clone())
                .or_default()
                .push(arc.global_offset);
            st.types
                .entry(arc.event_type.clone())
                .or_default()
                .push(arc.global_offset);
            st.events.push(arc);
        }
        StatCounters::bump(&self.counters.append_calls, 1);
    }

    pub fn read_actor(
        &self,
        actor_id: &str,
        from_sequence: u64,
        to_sequence: Option<u64>,
    ) -> Vec<EventRecord> {
        StatCounters::bump(&self.counters.read_actor_calls, 1);
        let st = self.state.read().expect("store index lock poisoned");
        let Some(offsets) = st.actors.get(actor_id) else {
            return Vec::new();
        };
        let len = offsets.len() as u64;
        let from = from_sequence.max(1);
        let to = to_sequence.unwrap_or(len).min(len);
        if from > to {
            return Vec::new();
        }
        let out: Vec<EventRecord> = offsets[(from - 1) as usize..to as usize]
            .iter()
            .map(|&off| (*st.events[(off - 1) as usize]).clone())
            .collect();
        StatCounters::bump(&self.counters.records_scanned, out.len() as u64);
        out
    }

    pub fn read_global(&self, from_offset: u64, limit: usize) -> Vec<EventRecord> {
        StatCounters::bump(&self.counters.read_global_calls, 1);
        let st = self.state.read().expect("store index lock poisoned");
        let len = st.events.len() as u64;
        let from = from_offset.max(1);
        if from > len || limit == 0 {
            return Vec::new();
        }
        let end = (from - 1).saturating_add(limit as u64).min(len);
        let out: Vec<EventRecord> = st.events[(from - 1) as usize..end as usize]
            .iter()
            .map(|r| (**r).clone())
            .collect();
        StatCounters::bump(&self.counters.records_scanned, out.len() as u64);
        out
    }

    pub fn read_by_event_type(
        &self,
        event_type: &str,
        from_offset: u64,
        limit: usize,
    ) -> Vec<EventRecord> {
        StatCounters::bump(&self.counters.read_type_calls, 1);
        let st = self.state.read().expect("store index lock poisoned");
        let Some(offsets) = st.types.get(event_type) else {
            return Vec::new();
        };
        let start = offsets.partition_point(|&off| off < from_offset.max(1));
        let out: Vec<EventRecord> = offsets[start..]
            .iter()
            .take(limit)
            .map(|&off| (*st.events[(off - 1) as usize]).clone())
            .collect();
        StatCounters::bump(&self.counters.records_scanned, out.len() as u64);
        out
    }

    pub fn save_snapshot(&self, snapshot: &Snapshot) {
        let mut st = self.state.write().expect("store index lock poisoned");
        let list = st.snapshots.entry(snapshot.actor_id.clone()).or_default();
        list.push(snapshot.clone());
        list.sort_by_key(|s| s.up_to_sequence);
    }

    pub fn snapshots(&self, actor_id: &str) -> Vec<Snapshot> {
        let st = self.state.read().expect("store index lock poisoned");
        st.snapshots.get(actor_id).cloned().unwrap_or_default()
    }

    pub fn replace_snapshots(&self, actor_id: &str, keep: &[Snapshot]) {
        let mut st = self.state.write().expect("store index lock poisoned");
        let mut list = keep.to_vec();
        list.sort_by_key(|s| s.up_to_sequence);
        st.snapshots.insert(actor_id.to_string(), list);
    }

    pub fn max_global_offset(&self) -> u64 {
        let st = self.state.read().expect("store index lock poisoned");
        st.events.len() as u64
    }

    pub fn stats(&self) -> BackendStats {
        self.counters.snapshot()
    }
}

/// Volatile in-memory storage backend.
#[derive(Debug, Default)]
pub struct MemoryBackend {
    index: MemIndex,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StorageBackend for MemoryBackend {
    fn append_batch(&self, records: Vec<EventRecord>) -> Result<(), StoreError> {
        self.index.insert_batch(records);
        Ok(())
    }

    fn read_actor(
        &self,
        actor_id: &str,
        from_sequence: u64,
        to_sequence: Option<u64>,
    ) -> Vec<EventRecord> {
        self.index.read_actor(actor_id, from_sequence, to_sequence)
    }

    fn read_global(&self, from_offset: u64, limit: usize) -> Vec<EventRecord> {
        self.index.read_global(from_offset, limit)
    }

    fn read_by_event_type(
        &self,
        event_type: &str,
        from_offset: u64,
        limit: usize,
    ) -> Vec<EventRecord> {
        self.index.read_by_event_type(event_type, from_offset, limit)
    }

    fn save_snapshot(&self, snapshot: &Snapshot) -> Result<(), StoreError> {
        self.index.save_snapshot(snapshot);
        Ok(())
    }

    fn snapshots(&self, actor_id: &str) -> Vec<Snapshot> {
        self.index.snapshots(actor_id)
    }

    fn replace_snapshots(&self, actor_id: &str, keep: &[Snapshot]) -> Result<(), StoreError> {
        self.index.replace_snapshots(actor_id, keep);
        Ok(())
    }

    fn max_global_offset(&self) -> u64 {
        self.index.max_global_offset()
    }

    fn stats(&self) -> BackendStats {
        self.index.stats()
    }
}
