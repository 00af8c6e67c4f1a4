//! Signing-key registry with a revocation feed and polled verifier views.
//!
//! Revocation is terminal. Verifiers hold a snapshot of the registry and
//! refresh it when the configured poll interval has elapsed, so worst-case
//! revocation propagation equals the poll interval.

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::SecurityError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyStatus {
    Active,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub key_id: String,
    /// Ed25519 verifying key, 32 bytes, hex-encoded in JSON.
    #[serde(with = "hex32")]
    pub public_key: [u8; 32],
    pub owner: String,
    pub status: KeyStatus,
    pub revoked_at: Option<i64>,
}

/// Hex serde for 32-byte keys.
pub(crate) mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8; 32], ser: S) -> Result<S::Ok, S::Error> {
        let hex: String = bytes.iter().map(|b| format!("{b:02x}")).collect();
        ser.serialize_str(&hex)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(de)?;
        if s.len() != 64 {
            return Err(serde::de::Error::custom("expected 64 hex chars"));
        }
        let mut out = [0u8; 32];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

struct RegistryState {
    keys: HashMap<String, KeyRecord>,
    /// Bumped on every mutation; lets views skip no-op refreshes.
    version: u64,
}

/// Authoritative key registry.
pub struct KeyRegistry {
    state: RwLock<RegistryState>,
}

impl Default for KeyRegistry {
    fn default() -> Self {
        KeyRegistry {
            state: RwLock::new(RegistryState {
                keys: HashMap::new(),
                version: 0,
            }),
        }
    }
}

impl KeyRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &self,
        key_id: &str,
        public_key: [u8; 32],
        owner: &str,
    ) -> Result<(), SecurityError> {
        let mut st = self.state.write().expect("key registry lock poisoned");
        if st.keys.contains_key(key_id) {
            return Err(SecurityError::DuplicateKey(key_id.to_string()));
        }
        st.keys.insert(
            key_id.to_string(),
            KeyRecord {
                key_id: key_id.to_string(),
                public_key,
                owner: owner.to_string(),
                status: KeyStatus::Active,
                revoked_at: None,
            },
        );
        st.version += 1;
        Ok(())
    }

    /// Mark a key revoked. Idempotent; revocation is terminal.
    pub fn revoke(&self, key_id: &str, now: i64) -> Result<(), SecurityError> {
        let mut st = self.state.write().expect("key registry lock poisoned");
        let record = st
            .keys
            .get_mut(key_id)
            .ok_or_else(|| SecurityError::KeyUnknown(key_id.to_string()))?;
        if record.status == KeyStatus::Active {
            record.status = KeyStatus::Revoked;
            record.revoked_at = Some(now);
        }
        st.version += 1;
        Ok(())
    }

    pub fn get(&self, key_id: &str) -> Option<KeyRecord> {
        let st = self.state.read().expect("key registry lock poisoned");
        st.keys.get(key_id).cloned()
    }

    pub fn all(&self) -> Vec<KeyRecord> {
        let st = self.state.read().expect("key registry lock poisoned");
        let mut keys: Vec<KeyRecord> = st.keys.values().cloned().collect();
        keys.sort_by(|a, b| a.key_id.cmp(&b.key_id));
        keys
    }

    fn snapshot(&self) -> (HashMap<String, KeyRecord>, u64) {
        let st = self.state.read().expect("key registry lock poisoned");
        (st.keys.clone(), st.version)
    }
}

struct ViewState {
    keys: HashMap<String, KeyRecord>,
    version: u64,
    refreshed_at: i64,
}

/// A verifier's possibly-stale view of the key registry.
///
/// `lookup` refreshes from the registry when `poll_interval_ms` has
/// elapsed since the last refresh; in between, revocations are invisible.
pub struct RevocationView {
    state: RwLock<ViewState>,
    poll_interval_ms: i64,
}

impl RevocationView {
    pub fn new(registry: &KeyRegistry, poll_interval_ms: i64, now: i64) -> Self {
        let (keys, version) = registry.snapshot();
        RevocationView {
            state: RwLock::new(ViewState {
                keys,
                version,
                refreshed_at: now,
            }),
            poll_interval_ms,
        }
    }

    pub fn refresh(&self, registry: &KeyRegistry, now: i64) {
        let (keys, version) = registry.snapshot();
        let mut st = self.state.write().expect("revocation view lock poisoned");
        // Replace wholesale: readers never observe a partial update.
        st.keys = keys;
        st.version = version;
        st.refreshed_at = now;
    }

    pub fn lookup(&self, registry: &KeyRegistry, key_id: &str, now: i64) -> Option<KeyRecord> {
        let due = {
            let st = self.state.read().expect("revocation view lock poisoned");
            now.saturating_sub(st.refreshed_at) >= self.poll_interval_ms
        };
        if due {
            self.refresh(registry, now);
        }
        let st = self.state.read().expect("revocation view lock poisoned");
        st.keys.get(key_id).cloned()
    }
}
