//! Single-file append-log backend.
//!
//! Log format: 4-byte magic `ADB1`, then length-prefixed frames — u32
//! little-endian payload length, the payload (canonical JSON of one
//! `EventRecord`), and a u32 little-endian CRC32 of the payload. Snapshots
//! use the same framing, one file per actor named
//! `<hex(sha256(actor_id))>.snap`, holding canonical JSON `Snapshot`
//! records.
//!
//! Recovery drops a torn tail: scanning stops at the first incomplete or
//! CRC-failing frame and the file is truncated back to the last valid
//! boundary. All fully-written frames before it stay readable.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

use super::backend::{BackendStats, StorageBackend};
use super::memory::MemIndex;
use super::types::{EventRecord, Snapshot, StoreError};
use crate::scalar::canonical_json;

pub const LOG_MAGIC: &[u8; 4] = b"ADB1";
const LOG_FILE: &str = "events.adb";
const FRAME_OVERHEAD: usize = 8; // length + crc
const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

/// Append-log backend rooted at a directory. Reads are served from the
/// in-memory index rebuilt at open; writes append frames before indexing.
pub struct FileLogBackend {
    dir: PathBuf,
    index: MemIndex,
    log: Mutex<File>,
}

impl FileLogBackend {
    /// Open or create the log directory, recovering all intact records.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let log_path = dir.join(LOG_FILE);

        let index = MemIndex::default();
        let file = open_framed_file(&log_path, |payload| {
            let record: EventRecord = serde_json::from_slice(payload)?;
            index.insert_batch(vec![record]);
            Ok(())
        })?;

        let backend = FileLogBackend {
            dir,
            index,
            log: Mutex::new(file),
        };
        backend.load_snapshots()?;
        Ok(backend)
    }

    fn load_snapshots(&self) -> Result<(), StoreError> {
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("snap") {
                continue;
            }
            open_framed_file(&path, |payload| {
                let snapshot: Snapshot = serde_json::from_slice(payload)?;
                self.index.save_snapshot(&snapshot);
                Ok(())
            })?;
        }
        Ok(())
    }

    fn snapshot_path(&self, actor_id: &str) -> PathBuf {
        let digest = Sha256::digest(actor_id.as_bytes());
        self.dir.join(format!("{}.snap", hex_lower(&digest)))
    }
}

impl StorageBackend for FileLogBackend {
    fn append_batch(&self, records: Vec<EventRecord>) -> Result<(), StoreError> {
        let mut buf = Vec::new();
        for record in &records {
            let payload = canonical_json(record)?;
            encode_frame(&mut buf, &payload);
        }
        {
            let mut log = self.log.lock().expect("log file lock poisoned");
            log.write_all(&buf)?;
            log.flush()?;
        }
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
        let path = self.snapshot_path(&snapshot.actor_id);
        let payload = canonical_json(snapshot)?;
        let mut buf = Vec::with_capacity(payload.len() + FRAME_OVERHEAD);
        encode_frame(&mut buf, &payload);

        let mut file = if path.exists() {
            OpenOptions::new().append(true).open(&path)?
        } else {
            let mut f = File::create(&path)?;
            f.write_all(LOG_MAGIC)?;
            f
        };
        file.write_all(&buf)?;
        file.flush()?;
        self.index.save_snapshot(snapshot);
        Ok(())
    }

    fn snapshots(&self, actor_id: &str) -> Vec<Snapshot> {
        self.index.snapshots(actor_id)
    }

    fn replace_snapshots(&self, actor_id: &str, keep: &[Snapshot]) -> Result<(), StoreError> {
        let path = self.snapshot_path(actor_id);
        let tmp = path.with_extension("snap.tmp");
        {
            let mut file = File::create(&tmp)?;
            file.write_all(LOG_MAGIC)?;
            let mut buf = Vec::new();
            for snapshot in keep {
                let payload = canonical_json(snapshot)?;
                encode_frame(&mut buf, &payload);
            }
            file.write_all(&buf)?;
            file.flush()?;
        }
        fs::rename(&tmp, &path)?;
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

fn hex_lower(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode_frame(buf: &mut Vec<u8>, payload: &[u8]) {
    buf.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    buf.extend_from_slice(payload);
    buf.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
}

/// Open a framed file, feeding every intact payload to `on_payload`.
/// Creates the file (with magic) when missing; truncates a torn tail.
/// Returns the file handle positioned at the end for appends.
fn open_framed_file(
    path: &Path,
    mut on_payload: impl FnMut(&[u8]) -> Result<(), StoreError>,
) -> Result<File, StoreError> {
    if !path.exists() {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        file.write_all(LOG_MAGIC)?;
        file.flush()?;
        return Ok(file);
    }

    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;

    if data.len() < LOG_MAGIC.len() || &data[..LOG_MAGIC.len()] != LOG_MAGIC {
        return Err(StoreError::Corrupt(format!(
            "{}: missing ADB1 magic",
            path.display()
        )));
    }

    let mut pos = LOG_MAGIC.len();
    loop {
        match next_frame(&data, pos) {
            FrameScan::Complete { payload, next } => {
                on_payload(payload)?;
                pos = next;
            }
            FrameScan::End => break,
            FrameScan::Torn => {
                // Torn or corrupt tail: drop it.
                file.set_len(pos as u64)?;
                break;
            }
        }
    }

    file.seek(SeekFrom::End(0))?;
    Ok(file)
}

enum FrameScan<'a> {
    Complete { payload: &'a [u8], next: usize },
    Torn,
    End,
}

fn next_frame(data: &[u8], pos: usize) -> FrameScan<'_> {
    if pos == data.len() {
        return FrameScan::End;
    }
    if data.len() - pos < 4 {
        return FrameScan::Torn;
    }
    let len = u32::from_le_bytes(data[pos..pos + 4].try_into().unwrap());
    if len > MAX_FRAME_LEN {
        return FrameScan::Torn;
    }
    let body_start = pos + 4;
    let body_end = body_start + len as usize;
    let frame_end = body_end + 4;
    if frame_end > data.len() {
        return FrameScan::Torn;
    }
    let payload = &data[body_start..body_end];
    let stored_crc = u32::from_le_bytes(data[body_end..frame_end].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return FrameScan::Torn;
    }
    FrameScan::Complete {
        payload,
        next: frame_end,
    }
}

/// Read every intact framed payload of type `T` from a file (test helper
/// for golden-file assertions).
pub fn read_framed<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let data = fs::read(path)?;
    if data.len() < LOG_MAGIC.len() || &data[..LOG_MAGIC.len()] != LOG_MAGIC {
        return Err(StoreError::Corrupt("missing ADB1 magic".into()));
    }
    let mut out = Vec::new();
    let mut pos = LOG_MAGIC.len();
    while let FrameScan::Complete { payload, next } = next_frame(&data, pos) {
        out.push(serde_json::from_slice(payload)?);
        pos = next;
    }
    Ok(out)
}
