//! Engine configuration, loadable from a JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{PromotionPolicy, SloTarget, DEFAULT_MIN_SAMPLES, DEFAULT_WINDOW_MS};
use crate::store::RetentionPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StorageConfig {
    Memory,
    File { path: PathBuf },
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig::Memory
    }
}

fn default_polling_interval_ms() -> u64 {
    10
}

fn default_revocation_poll_s() -> u64 {
    5
}

fn default_listen_addr() -> String {
    "127.0.0.1:7878".to_string()
}

fn default_window_ms() -> i64 {
    DEFAULT_WINDOW_MS
}

fn default_min_samples() -> usize {
    DEFAULT_MIN_SAMPLES
}

fn default_tick_interval_ms() -> u64 {
    1_000
}

fn default_subscription_capacity() -> usize {
    crate::projection::DEFAULT_SUBSCRIPTION_CAPACITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub storage: StorageConfig,
    /// Background catch-up poll interval for materialized views.
    pub polling_interval_ms: u64,
    pub revocation_poll_interval_s: u64,
    pub snapshot_retention: RetentionPolicy,
    pub slo_targets: Vec<SloTarget>,
    pub promotion_policy: PromotionPolicy,
    /// SLO window length.
    pub window_ms: i64,
    /// Minimum samples for a window to have a defined p99.
    pub min_samples: usize,
    /// Control-loop tick interval.
    pub tick_interval_ms: u64,
    /// Process DAG manifest; `None` uses the built-in component DAG.
    pub dag_manifest_path: Option<PathBuf>,
    /// Hex-encoded 32-byte authority key seed; `None` generates one.
    pub authority_key_path: Option<PathBuf>,
    pub listen_addr: String,
    /// Audit JSON-lines sink; `None` keeps audit in memory only.
    pub audit_path: Option<PathBuf>,
    /// Directory holding principals.json / keys.json / policies.json.
    pub security_state_dir: Option<PathBuf>,
    /// Projection definitions (JSON array) registered at startup.
    pub projections_path: Option<PathBuf>,
    pub subscription_capacity: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            storage: StorageConfig::Memory,
            polling_interval_ms: default_polling_interval_ms(),
            revocation_poll_interval_s: default_revocation_poll_s(),
            snapshot_retention: RetentionPolicy::default(),
            slo_targets: Vec::new(),
            promotion_policy: PromotionPolicy::default(),
            window_ms: default_window_ms(),
            min_samples: default_min_samples(),
            tick_interval_ms: default_tick_interval_ms(),
            dag_manifest_path: None,
            authority_key_path: None,
            listen_addr: default_listen_addr(),
            audit_path: None,
            security_state_dir: None,
            projections_path: None,
            subscription_capacity: default_subscription_capacity(),
        }
    }
}

impl EngineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, String> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| format!("cannot read config {}: {e}", path.as_ref().display()))?;
        let config: EngineConfig =
            serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.polling_interval_ms == 0
            || self.revocation_poll_interval_s == 0
            || self.tick_interval_ms == 0
            || self.window_ms <= 0
        {
            return Err("all intervals must be positive".into());
        }
        if self.snapshot_retention.keep_last_n == 0 {
            return Err("snapshot_retention.keep_last_n must be >= 1".into());
        }
        self.promotion_policy.validate()?;
        for target in &self.slo_targets {
            target.validate()?;
        }
        Ok(())
    }
}
