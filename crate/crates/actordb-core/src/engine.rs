//! Engine assembly: components wired in process-DAG order.
//!
//! The write entry point accepts only signed command envelopes — there is
//! no unsigned path into the store from here. Queries authenticate a PoP
//! token, then run through policy-aware planning and execution. Background
//! workers poll the feed for materialized views, drive snapshot retention,
//! and tick the control loop.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::config::{EngineConfig, StorageConfig};
use crate::control::{ControlPlane, HealthReport};
use crate::dag::{load_nodes, DagError, DagManifest, ProcessNode};
use crate::projection::{
    MaterializationMode, ProjectionDefinition, ProjectionEngine, ProjectionError,
    SubscriptionStream,
};
use crate::query::{QueryError, QueryService};
use crate::scalar::{Document, Scalar};
use crate::security::{
    Policy, PopToken, Principal, SecurityError, SecurityLayer, SignedCommand, TokenAuthority,
};
use crate::security::{AuditSink, KeyStatus};
use crate::store::{
    EventStore, FileLogBackend, MemoryBackend, StorageBackend, StoreError,
};
use crate::time::{Clock, SystemClock};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Store(#[from] StoreError),

    #[error(transparent)]
    Security(#[from] SecurityError),

    #[error(transparent)]
    Query(#[from] QueryError),

    #[error(transparent)]
    Projection(#[from] ProjectionError),

    #[error(transparent)]
    Dag(#[from] DagError),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Config(_) => "Config",
            EngineError::Store(StoreError::SequenceConflict { .. }) => "SequenceConflict",
            EngineError::Store(StoreError::DuplicateCommand { .. }) => "DuplicateCommand",
            EngineError::Store(StoreError::InvalidArgument(_)) => "InvalidArgument",
            EngineError::Store(_) => "StoreError",
            EngineError::Security(e) => e.code(),
            EngineError::Query(e) => e.code(),
            EngineError::Projection(ProjectionError::UnknownProjection(_)) => "UnknownProjection",
            EngineError::Projection(ProjectionError::Busy(_)) => "Busy",
            EngineError::Projection(_) => "ProjectionError",
            EngineError::Dag(_) => "DagError",
        }
    }
}

/// Result of a verified, committed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct CommandOutcome {
    pub first_sequence: u64,
    pub last_sequence: u64,
    pub last_global_offset: u64,
    /// True when an idempotent retry returned the original range.
    pub deduplicated: bool,
}

pub struct Engine {
    config: EngineConfig,
    clock: Arc<dyn Clock>,
    audit: Arc<AuditSink>,
    store: Arc<EventStore>,
    security: Arc<SecurityLayer>,
    projections: Arc<ProjectionEngine>,
    control: Arc<ControlPlane>,
    query: Arc<QueryService>,
    manifest: DagManifest,
    startup_order: Vec<String>,
    shutdown: Arc<AtomicBool>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    /// Actor sequence seen at the last snapshot check.
    snapshot_cursor: Mutex<HashMap<String, u64>>,
}

/// The engine's own component DAG (used when no manifest file is given).
/// Startup follows its topological order; shutdown the reverse.
pub fn builtin_manifest(config: &EngineConfig) -> DagManifest {
    let storage = match &config.storage {
        StorageConfig::Memory => serde_json::json!({"backend": "memory"}),
        StorageConfig::File { path } => {
            serde_json::json!({"backend": "file", "path": path.display().to_string()})
        }
    };
    let nodes = vec![
        ProcessNode {
            name: "event_store".into(),
            depends_on: vec![],
            config: storage,
        },
        ProcessNode {
            name: "projection_engine".into(),
            depends_on: vec!["event_store".into()],
            config: serde_json::json!({"polling_interval_ms": config.polling_interval_ms}),
        },
        ProcessNode {
            name: "security_layer".into(),
            depends_on: vec!["event_store".into()],
            config: serde_json::json!({
                "revocation_poll_interval_s": config.revocation_poll_interval_s
            }),
        },
        ProcessNode {
            name: "query_interface".into(),
            depends_on: vec!["projection_engine".into(), "security_layer".into()],
            config: serde_json::json!({}),
        },
        ProcessNode {
            name: "control_plane".into(),
            depends_on: vec!["projection_engine".into(), "query_interface".into()],
            config: serde_json::json!({
                "window_ms": config.window_ms,
                "promotion_policy": config.promotion_policy,
            }),
        },
    ];
    load_nodes(nodes).expect("builtin component DAG is acyclic")
}

const COMPONENTS: [&str; 5] = [
    "event_store",
    "projection_engine",
    "security_layer",
    "query_interface",
    "control_plane",
];

impl Engine {
    pub fn start(config: EngineConfig) -> Result<Arc<Engine>, EngineError> {
        Self::start_with_clock(config, Arc::new(SystemClock))
    }

    pub fn start_with_clock(
        config: EngineConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Arc<Engine>, EngineError> {
        config.validate().map_err(EngineError::Config)?;

        let manifest = match &config.dag_manifest_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| EngineError::Config(format!("dag manifest: {e}")))?;
                crate::dag::load(&text)?
            }
            None => builtin_manifest(&config),
        };
        for component in COMPONENTS {
            if manifest.node(component).is_none() {
                return Err(EngineError::Config(format!(
                    "dag manifest is missing the {component:?} component"
                )));
            }
        }
        let startup_order: Vec<String> =
            manifest.topo_order().into_iter().map(String::from).collect();

        let audit: Arc<AuditSink> = match &config.audit_path {
            Some(path) => Arc::new(AuditSink::with_file(path)?),
            None => Arc::new(AuditSink::new()),
        };

        // Components initialize in DAG startup order.
        let mut store: Option<Arc<EventStore>> = None;
        let mut security: Option<Arc<SecurityLayer>> = None;
        let mut projections: Option<Arc<ProjectionEngine>> = None;
        let mut query: Option<Arc<QueryService>> = None;
        let mut control: Option<Arc<ControlPlane>> = None;

        for component in &startup_order {
            match component.as_str() {
                "event_store" => {
                    let backend: Arc<dyn StorageBackend> = match &config.storage {
                        StorageConfig::Memory => Arc::new(MemoryBackend::new()),
                        StorageConfig::File { path } => Arc::new(FileLogBackend::open(path)?),
                    };
                    store = Some(Arc::new(EventStore::open(backend, Arc::clone(&clock))));
                }
                "security_layer" => {
                    let authority = load_authority(config.authority_key_path.as_deref())?;
                    let layer = SecurityLayer::new(
                        authority,
                        config.revocation_poll_interval_s as i64 * 1000,
                        Arc::clone(&audit),
                        clock.now_ms(),
                    );
                    if let Some(dir) = &config.security_state_dir {
                        load_security_state(&layer, dir, clock.now_ms())?;
                    }
                    security = Some(Arc::new(layer));
                }
                "projection_engine" => {
                    let store = store.as_ref().ok_or_else(|| {
                        EngineError::Config("projection_engine started before event_store".into())
                    })?;
                    let engine = ProjectionEngine::new(
                        Arc::clone(store),
                        Arc::clone(&audit),
                        Arc::clone(&clock),
                    );
                    if let Some(path) = &config.projections_path {
                        for def in load_projection_defs(path)? {
                            engine.register_projection(def)?;
                        }
                    }
                    projections = Some(Arc::new(engine));
                }
                "query_interface" => {
                    let projections = projections.as_ref().ok_or_else(|| {
                        EngineError::Config("query_interface needs projection_engine".into())
                    })?;
                    let security = security.as_ref().ok_or_else(|| {
                        EngineError::Config("query_interface needs security_layer".into())
                    })?;
                    query = Some(Arc::new(QueryService::new(
                        Arc::clone(projections),
                        Arc::clone(security),
                        Arc::clone(&clock),
                    )));
                }
                "control_plane" => {
                    let plane = ControlPlane::new(
                        config.window_ms,
                        config.min_samples,
                        config.promotion_policy.clone(),
                        config.slo_targets.clone(),
                        Arc::clone(&audit),
                    );
                    control = Some(Arc::new(plane));
                }
                _ => {} // foreign nodes in a custom manifest are inert here
            }
        }

        let store = store.expect("event_store is a required component");
        let security = security.expect("security_layer is a required component");
        let projections = projections.expect("projection_engine is a required component");
        let query = query.expect("query_interface is a required component");
        let control = control.expect("control_plane is a required component");
        query.set_latency_sink(Arc::clone(&control) as Arc<dyn crate::query::LatencySink>);

        Ok(Arc::new(Engine {
            config,
            clock,
            audit,
            store,
            security,
            projections,
            control,
            query,
            manifest,
            startup_order,
            shutdown: Arc::new(AtomicBool::new(false)),
            workers: Mutex::new(Vec::new()),
            snapshot_cursor: Mutex::new(HashMap::new()),
        }))
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &Arc<EventStore> {
        &self.store
    }

    pub fn security(&self) -> &Arc<SecurityLayer> {
        &self.security
    }

    pub fn projections(&self) -> &Arc<ProjectionEngine> {
        &self.projections
    }

    pub fn control(&self) -> &Arc<ControlPlane> {
        &self.control
    }

    pub fn query_service(&self) -> &Arc<QueryService> {
        &self.query
    }

    pub fn audit(&self) -> &Arc<AuditSink> {
        &self.audit
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn manifest(&self) -> &DagManifest {
        &self.manifest
    }

    pub fn startup_order(&self) -> &[String] {
        &self.startup_order
    }

    pub fn shutdown_order(&self) -> Vec<String> {
        self.startup_order.iter().rev().cloned().collect()
    }

    /// The only write path: verify the envelope, then append its body.
    /// An idempotent retry of a committed command returns the original
    /// range with `deduplicated` set.
    pub fn submit_command(&self, cmd: &SignedCommand) -> Result<CommandOutcome, EngineError> {
        let now = self.clock.now_ms();
        self.security.verify_command(cmd, now)?;
        let body = cmd.body()?;
        match self
            .store
            .append(&body.actor_id, body.expected_sequence, body.events)
        {
            Ok(receipt) => Ok(CommandOutcome {
                first_sequence: receipt.first_sequence,
                last_sequence: receipt.last_sequence,
                last_global_offset: receipt.last_global_offset,
                deduplicated: false,
            }),
            Err(StoreError::DuplicateCommand { receipt, .. }) => Ok(CommandOutcome {
                first_sequence: receipt.first_sequence,
                last_sequence: receipt.last_sequence,
                last_global_offset: receipt.last_global_offset,
                deduplicated: true,
            }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn submit_command_wire(&self, wire: &str) -> Result<CommandOutcome, EngineError> {
        let cmd = SignedCommand::from_wire(wire)?;
        self.submit_command(&cmd)
    }

    /// Authenticate a PoP token and return its principal.
    pub fn authenticate(&self, token: &PopToken) -> Result<Principal, EngineError> {
        Ok(self.security.authenticate_token(token, self.clock.now_ms())?)
    }

    pub fn query(&self, sql: &str, principal: &Principal) -> Result<Vec<Document>, EngineError> {
        Ok(self.query.query(sql, principal)?)
    }

    pub fn subscribe(
        &self,
        sql: &str,
        principal: &Principal,
    ) -> Result<SubscriptionStream, EngineError> {
        Ok(self
            .query
            .subscribe(sql, principal, Some(self.config.subscription_capacity))?)
    }

    pub fn apply_policies(&self, policies: Vec<Policy>) -> Result<(), EngineError> {
        Ok(self.security.apply_policies(policies, self.clock.now_ms())?)
    }

    pub fn health(&self) -> HealthReport {
        self.control.health(&self.projections, self.clock.now_ms())
    }

    /// Spawn the maintenance worker (materialized catch-up + snapshot
    /// trigger) and the control-loop ticker.
    pub fn start_workers(self: &Arc<Self>) {
        let mut workers = self.workers.lock().expect("worker list lock poisoned");

        let engine = Arc::clone(self);
        workers.push(std::thread::spawn(move || {
            let interval = Duration::from_millis(engine.config.polling_interval_ms);
            let snapshot_every =
                (500 / engine.config.polling_interval_ms.max(1)).max(1) as u64;
            let mut ticks = 0u64;
            while !engine.shutdown.load(Ordering::SeqCst) {
                engine.maintenance_pass();
                ticks += 1;
                if ticks % snapshot_every == 0 {
                    engine.snapshot_pass();
                }
                std::thread::park_timeout(interval);
            }
        }));

        let engine = Arc::clone(self);
        workers.push(std::thread::spawn(move || {
            let interval = Duration::from_millis(engine.config.tick_interval_ms);
            while !engine.shutdown.load(Ordering::SeqCst) {
                engine.control.tick(&engine.projections, engine.clock.now_ms());
                std::thread::park_timeout(interval);
            }
        }));
    }

    /// One poll: fold new feed records into every materialized view.
    pub fn maintenance_pass(&self) {
        for def in self.projections.definitions() {
            if matches!(self.projections.mode(&def.name), Ok(MaterializationMode::Materialized)) {
                // Bounded batches per pass keep one view from starving others.
                for _ in 0..16 {
                    match self.projections.catch_up(&def.name, 4_096) {
                        Ok(report) if report.events_applied > 0 => continue,
                        _ => break,
                    }
                }
            }
        }
    }

    /// Snapshot trigger: actors that accumulated
    /// `min_events_between_snapshots` new events since their last snapshot
    /// get a payload-merge snapshot, then retention pruning.
    pub fn snapshot_pass(&self) {
        let retention = self.config.snapshot_retention;
        let min_between = retention.min_events_between_snapshots.max(1);
        let actors = self.store.actor_ids();
        let mut cursor = self.snapshot_cursor.lock().expect("snapshot cursor lock poisoned");
        for actor in actors {
            let head = self.store.actor_max_sequence(&actor);
            let checked = cursor.entry(actor.clone()).or_insert(0);
            if head < *checked + min_between {
                continue;
            }
            let base = self.store.load_latest_snapshot(&actor);
            let (mut state, from) = match &base {
                Some(snap) => (snap.state.clone(), snap.up_to_sequence + 1),
                None => (Document::new(), 1),
            };
            if head < from + min_between - 1 {
                *checked = head;
                continue;
            }
            if let Ok(events) = self.store.read_stream(&actor, from, Some(head)) {
                for event in &events {
                    for (field, value) in &event.payload {
                        state.insert(field.clone(), value.clone());
                    }
                }
                let _ = self.store.save_snapshot(&actor, head, state);
                let _ = self.store.prune_snapshots(&actor, &retention);
            }
            *checked = head;
        }
    }

    /// Stop workers; components wind down in reverse startup order when
    /// the engine drops.
    pub fn shutdown(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let mut workers = self.workers.lock().expect("worker list lock poisoned");
        for worker in workers.drain(..) {
            worker.thread().unpark();
            let _ = worker.join();
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }
}

fn load_authority(path: Option<&Path>) -> Result<TokenAuthority, EngineError> {
    match path {
        Some(path) if path.exists() => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| EngineError::Config(format!("authority key: {e}")))?;
            let seed = parse_seed_hex(text.trim())
                .ok_or_else(|| EngineError::Config("authority key must be 64 hex chars".into()))?;
            Ok(TokenAuthority::from_seed(&seed))
        }
        Some(path) => {
            // First run: generate and persist the seed.
            let seed: [u8; 32] = rand::random();
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| EngineError::Config(format!("authority key dir: {e}")))?;
            }
            std::fs::write(path, seed.iter().map(|b| format!("{b:02x}")).collect::<String>())
                .map_err(|e| EngineError::Config(format!("authority key: {e}")))?;
            Ok(TokenAuthority::from_seed(&seed))
        }
        None => {
            let seed: [u8; 32] = rand::random();
            Ok(TokenAuthority::from_seed(&seed))
        }
    }
}

fn parse_seed_hex(text: &str) -> Option<[u8; 32]> {
    if text.len() != 64 {
        return None;
    }
    let mut seed = [0u8; 32];
    for (i, slot) in seed.iter_mut().enumerate() {
        *slot = u8::from_str_radix(&text[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(seed)
}

fn load_projection_defs(path: &Path) -> Result<Vec<ProjectionDefinition>, EngineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EngineError::Config(format!("projections file: {e}")))?;
    let defs: Vec<ProjectionDefinition> = serde_json::from_str(&text)
        .map_err(|e| EngineError::Config(format!("projections file: {e}")))?;
    Ok(defs)
}

/// Security state files: principals.json, keys.json, policies.json.
/// Policies carry row predicates in the query expression syntax.
fn load_security_state(
    layer: &SecurityLayer,
    dir: &Path,
    now: i64,
) -> Result<(), EngineError> {
    let principals_path = dir.join("principals.json");
    if principals_path.exists() {
        let text = std::fs::read_to_string(&principals_path)
            .map_err(|e| EngineError::Config(format!("principals.json: {e}")))?;
        let principals: Vec<Principal> = serde_json::from_str(&text)
            .map_err(|e| EngineError::Config(format!("principals.json: {e}")))?;
        for principal in principals {
            layer.upsert_principal(principal);
        }
    }

    let keys_path = dir.join("keys.json");
    if keys_path.exists() {
        let text = std::fs::read_to_string(&keys_path)
            .map_err(|e| EngineError::Config(format!("keys.json: {e}")))?;
        let keys: Vec<crate::security::KeyRecord> = serde_json::from_str(&text)
            .map_err(|e| EngineError::Config(format!("keys.json: {e}")))?;
        for record in keys {
            layer.register_key(&record.key_id, record.public_key, &record.owner, now)?;
            if record.status == KeyStatus::Revoked {
                layer.keys().revoke(&record.key_id, record.revoked_at.unwrap_or(now))?;
            }
        }
    }

    let policies_path = dir.join("policies.json");
    if policies_path.exists() {
        let text = std::fs::read_to_string(&policies_path)
            .map_err(|e| EngineError::Config(format!("policies.json: {e}")))?;
        let policies = parse_policies(&text)?;
        layer.policies().replace_all(policies)?;
    }
    // Loaded state is the starting point, not a live feed: revocations in
    // it take effect immediately rather than after a poll interval.
    layer.refresh_revocation_view(now);
    Ok(())
}

/// JSON schema for one policy document entry.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct PolicyDoc {
    pub policy_id: String,
    pub effect: crate::security::Effect,
    pub resource: String,
    #[serde(default)]
    pub role_any_of: std::collections::BTreeSet<String>,
    #[serde(default)]
    pub attribute_conditions: Vec<AttributeConditionDoc>,
    /// Row predicate in the query expression syntax.
    #[serde(default)]
    pub row_predicate: Option<String>,
    #[serde(default)]
    pub column_masks: std::collections::BTreeSet<String>,
    #[serde(default)]
    pub is_default: bool,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct AttributeConditionDoc {
    pub attribute: String,
    pub op: String,
    pub value: Scalar,
}

fn parse_comp_op(op: &str) -> Result<crate::expr::CompOp, EngineError> {
    use crate::expr::CompOp;
    Ok(match op {
        "=" => CompOp::Eq,
        "!=" => CompOp::Ne,
        "<" => CompOp::Lt,
        "<=" => CompOp::Le,
        ">" => CompOp::Gt,
        ">=" => CompOp::Ge,
        other => {
            return Err(EngineError::Config(format!(
                "unknown attribute condition operator {other:?}"
            )))
        }
    })
}

/// Persist the security state files that `load_security_state` reads.
pub fn save_security_state(layer: &SecurityLayer, dir: &Path) -> Result<(), EngineError> {
    std::fs::create_dir_all(dir).map_err(|e| EngineError::Config(format!("security dir: {e}")))?;
    let write = |name: &str, value: &serde_json::Value| -> Result<(), EngineError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| EngineError::Config(e.to_string()))?;
        std::fs::write(dir.join(name), text)
            .map_err(|e| EngineError::Config(format!("{name}: {e}")))
    };

    write(
        "principals.json",
        &serde_json::to_value(layer.principals()).map_err(|e| EngineError::Config(e.to_string()))?,
    )?;
    write(
        "keys.json",
        &serde_json::to_value(layer.keys().all()).map_err(|e| EngineError::Config(e.to_string()))?,
    )?;

    let docs: Vec<PolicyDoc> = layer
        .policies()
        .all()
        .iter()
        .map(|p| PolicyDoc {
            policy_id: p.policy_id.clone(),
            effect: p.effect,
            resource: p.resource.clone(),
            role_any_of: p.role_any_of.clone(),
            attribute_conditions: p
                .attribute_conditions
                .iter()
                .map(|c| AttributeConditionDoc {
                    attribute: c.attribute.clone(),
                    op: c.op.symbol().to_string(),
                    value: c.value.clone(),
                })
                .collect(),
            row_predicate: p.row_predicate.as_ref().map(|e| {
                let mut out = String::new();
                crate::query::print_expr(e, &mut out);
                out
            }),
            column_masks: p.column_masks.clone(),
            is_default: p.is_default,
        })
        .collect();
    write(
        "policies.json",
        &serde_json::to_value(docs).map_err(|e| EngineError::Config(e.to_string()))?,
    )
}

/// Parse a policy document (JSON array), compiling row predicates with the
/// query expression parser.
pub fn parse_policies(text: &str) -> Result<Vec<Policy>, EngineError> {
    let docs: Vec<PolicyDoc> = serde_json::from_str(text)
        .map_err(|e| EngineError::Config(format!("policies: {e}")))?;
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let row_predicate = match &doc.row_predicate {
            Some(text) => Some(crate::query::parse_expression(text).map_err(|e| {
                EngineError::Query(QueryError::ExpressionError(format!(
                    "policy {:?} row_predicate: {e}",
                    doc.policy_id
                )))
            })?),
            None => None,
        };
        let mut conditions = Vec::with_capacity(doc.attribute_conditions.len());
        for cond in doc.attribute_conditions {
            conditions.push(crate::security::AttributeCondition {
                attribute: cond.attribute,
                op: parse_comp_op(&cond.op)?,
                value: cond.value,
            });
        }
        out.push(Policy {
            policy_id: doc.policy_id,
            effect: doc.effect,
            resource: doc.resource,
            role_any_of: doc.role_any_of,
            attribute_conditions: conditions,
            row_predicate,
            column_masks: doc.column_masks,
            is_default: doc.is_default,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn startup_order_follows_the_component_dag() {
        let engine = Engine::start(EngineConfig::default()).unwrap();
        assert_eq!(
            engine.startup_order(),
            &[
                "event_store",
                "projection_engine",
                "security_layer",
                "query_interface",
                "control_plane"
            ]
        );
        let shutdown = engine.shutdown_order();
        assert_eq!(shutdown.first().map(String::as_str), Some("control_plane"));
        assert_eq!(shutdown.last().map(String::as_str), Some("event_store"));
    }

    #[test]
    fn builtin_manifest_root_commits_to_config() {
        let a = builtin_manifest(&EngineConfig::default());
        let mut config = EngineConfig::default();
        config.polling_interval_ms = 25;
        let b = builtin_manifest(&config);
        assert_ne!(a.root_hash, b.root_hash);
    }

    #[test]
    fn policies_parse_from_json_document() {
        let policies = parse_policies(
            r#"[
                {"policy_id":"p1","effect":"allow","resource":"*",
                 "role_any_of":["admin"]},
                {"policy_id":"p2","effect":"allow","resource":"cart_view",
                 "role_any_of":["user"],
                 "row_predicate":"owner = principal.sub",
                 "column_masks":["email"]},
                {"policy_id":"p3","effect":"deny","resource":"secrets",
                 "is_default":true,
                 "attribute_conditions":[{"attribute":"clearance","op":"<","value":3}]}
            ]"#,
        )
        .unwrap();
        assert_eq!(policies.len(), 3);
        assert!(policies[1].row_predicate.is_some());
        assert_eq!(policies[2].attribute_conditions.len(), 1);

        let err = parse_policies(
            r#"[{"policy_id":"bad","effect":"allow","resource":"*","role_any_of":["x"],
                 "row_predicate":"this is not (valid"}]"#,
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::Query(QueryError::ExpressionError(_))));
    }

    #[test]
    fn authority_seed_round_trips_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("authority.key");
        let a = load_authority(Some(&path)).unwrap();
        let b = load_authority(Some(&path)).unwrap();
        assert_eq!(a.verifying_key(), b.verifying_key(), "persisted seed reused");
    }
}
