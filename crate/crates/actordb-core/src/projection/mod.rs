//! Incrementally maintained keyed read models over the global event feed.
//!
//! Each registered projection owns a single-writer view: one maintenance
//! path applies events strictly in global-offset order while queries read
//! concurrently. Late events are corrected or dead-lettered per watermark,
//! temporal (`AS OF`) queries replay the feed, and views switch between
//! on-demand and materialized modes without losing state.

mod definition;
mod scheduler;
mod state;
mod subscription;

pub use definition::{
    ColumnKind, ColumnSpec, MaterializationMode, ProjectionDefinition, ACTOR_ID_KEY,
};
pub use scheduler::{BatchCtx, Priority, TaskEvent, TaskEventKind, TaskScheduler};
pub use state::{
    ApplyEffect, ChangeKind, DeadLetter, Disposition, LateEventOutcome, RowChange, RowFold,
    ViewState,
};
pub use subscription::{
    ChangeNotification, StreamError, SubscriptionHub, SubscriptionStream,
    DEFAULT_SUBSCRIPTION_CAPACITY,
};

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::expr::{Expression, PrincipalCtx};
use crate::scalar::{Document, Scalar, ScalarKey};
use crate::security::{AuditAction, AuditDecision, AuditSink};
use crate::store::{EventStore, StoreError};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("unknown projection {0:?}")]
    UnknownProjection(String),

    #[error("projection {0:?} already registered")]
    DuplicateName(String),

    #[error("invalid projection definition: {0}")]
    InvalidDefinition(String),

    #[error("projection {0:?} is busy rebuilding")]
    Busy(String),

    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatchUpReport {
    pub events_applied: u64,
    pub new_applied_offset: u64,
}

#[derive(Debug, Clone)]
pub struct RebuildReport {
    pub rows: usize,
    pub duration: Duration,
}

struct ViewHandle {
    def: ProjectionDefinition,
    custom: Option<Arc<dyn RowFold>>,
    state: RwLock<ViewState>,
    /// Single-writer guard: catch-up, rebuild swap, and mode changes.
    apply_lock: Mutex<()>,
    dead_letters: Mutex<Vec<DeadLetter>>,
    rebuilding: AtomicBool,
}

/// Engine maintaining all registered projections.
pub struct ProjectionEngine {
    store: Arc<EventStore>,
    audit: Arc<AuditSink>,
    clock: Arc<dyn crate::time::Clock>,
    scheduler: Arc<TaskScheduler>,
    hub: SubscriptionHub,
    views: RwLock<HashMap<String, Arc<ViewHandle>>>,
    catch_up_batch: usize,
}

const REBUILD_CHUNK: usize = 8_192;

impl ProjectionEngine {
    pub fn new(
        store: Arc<EventStore>,
        audit: Arc<AuditSink>,
        clock: Arc<dyn crate::time::Clock>,
    ) -> Self {
        ProjectionEngine {
            store,
            audit,
            clock,
            scheduler: Arc::new(TaskScheduler::new()),
            hub: SubscriptionHub::new(),
            views: RwLock::new(HashMap::new()),
            catch_up_batch: 4_096,
        }
    }

    pub fn scheduler(&self) -> &Arc<TaskScheduler> {
        &self.scheduler
    }

    pub fn hub(&self) -> &SubscriptionHub {
        &self.hub
    }

    pub fn store(&self) -> &Arc<EventStore> {
        &self.store
    }

    pub fn register_projection(&self, def: ProjectionDefinition) -> Result<(), ProjectionError> {
        self.register_with_fold(def, None)
    }

    /// Register a projection with an optional custom fold applied after
    /// the built-in columns.
    pub fn register_with_fold(
        &self,
        def: ProjectionDefinition,
        custom: Option<Arc<dyn RowFold>>,
    ) -> Result<(), ProjectionError> {
        def.validate()?;
        let mut views = self.views.write().expect("view map lock poisoned");
        if views.contains_key(&def.name) {
            return Err(ProjectionError::DuplicateName(def.name.clone()));
        }
        let handle = ViewHandle {
            state: RwLock::new(ViewState::new(def.mode)),
            custom,
            apply_lock: Mutex::new(()),
            dead_letters: Mutex::new(Vec::new()),
            rebuilding: AtomicBool::new(false),
            def,
        };
        views.insert(handle.def.name.clone(), Arc::new(handle));
        Ok(())
    }

    pub fn definitions(&self) -> Vec<ProjectionDefinition> {
        let views = self.views.read().expect("view map lock poisoned");
        let mut defs: Vec<ProjectionDefinition> = views.values().map(|v| v.def.clone()).collect();
        defs.sort_by(|a, b| a.name.cmp(&b.name));
        defs
    }

    pub fn definition(&self, name: &str) -> Result<ProjectionDefinition, ProjectionError> {
        Ok(self.view(name)?.def.clone())
    }

    fn view(&self, name: &str) -> Result<Arc<ViewHandle>, ProjectionError> {
        self.views
            .read()
            .expect("view map lock poisoned")
            .get(name)
            .cloned()
            .ok_or_else(|| ProjectionError::UnknownProjection(name.to_string()))
    }

    /// Poll the global feed once and fold up to `max_batch` new records.
    pub fn catch_up(&self, name: &str, max_batch: usize) -> Result<CatchUpReport, ProjectionError> {
        let handle = self.view(name)?;
        let _writer = handle.apply_lock.lock().expect("apply lock poisoned");
        Ok(self.apply_next_batch(&handle, max_batch))
    }

    /// Fold feed records into the view; the apply lock must be held.
    fn apply_next_batch(&self, handle: &ViewHandle, max_batch: usize) -> CatchUpReport {
        let from = {
            let state = handle.state.read().expect("view state lock poisoned");
            state.applied_offset + 1
        };
        let records = self.store.read_global(from, max_batch);
        let mut applied = 0u64;
        let mut offset = from - 1;
        for record in &records {
            if handle.def.source_event_types.contains(&record.event_type) {
                applied += 1;
                let effect = {
                    let mut state = handle.state.write().expect("view state lock poisoned");
                    let effect =
                        state.apply_event(&handle.def, record, handle.custom.as_deref());
                    state.applied_offset = record.global_offset;
                    effect
                };
                match effect {
                    ApplyEffect::Changed(change) => {
                        self.hub.publish(&handle.def.name, &change);
                    }
                    ApplyEffect::DeadLettered(dl) => {
                        self.audit.emit(
                            self.clock.now_ms(),
                            "system",
                            AuditAction::DeadLetter,
                            &handle.def.name,
                            AuditDecision::NotApplicable,
                            &format!("{} (lateness {}ms)", dl.reason, dl.lateness_ms),
                        );
                        handle
                            .dead_letters
                            .lock()
                            .expect("dead letter lock poisoned")
                            .push(dl);
                    }
                }
            } else {
                let mut state = handle.state.write().expect("view state lock poisoned");
                state.applied_offset = record.global_offset;
            }
            offset = record.global_offset;
        }
        CatchUpReport {
            events_applied: applied,
            new_applied_offset: offset.max(from - 1),
        }
    }

    /// Fold until the view reaches the feed head; the apply lock must be
    /// held by the caller.
    fn catch_up_to_head_locked(&self, handle: &ViewHandle) {
        loop {
            let report = self.apply_next_batch(handle, self.catch_up_batch);
            if report.new_applied_offset >= self.store.max_global_offset() {
                break;
            }
        }
    }

    /// Query rows. Without `as_of`: materialized views serve from state,
    /// on-demand views run an interactive catch-up first. With `as_of`:
    /// always a bounded replay of events with effective time <= as_of,
    /// regardless of mode.
    pub fn query_rows(
        &self,
        name: &str,
        predicate: Option<&Expression>,
        principal: Option<PrincipalCtx<'_>>,
        as_of: Option<i64>,
    ) -> Result<Vec<(Scalar, Document)>, ProjectionError> {
        let handle = self.view(name)?;

        if let Some(as_of) = as_of {
            return Ok(self.scheduler.run_interactive(&format!("as_of:{name}"), || {
                self.replay_as_of(&handle, as_of, predicate, principal)
            }));
        }

        let mode = {
            let state = handle.state.read().expect("view state lock poisoned");
            state.mode
        };
        if mode == MaterializationMode::OnDemand {
            self.scheduler.run_interactive(&format!("catch_up:{name}"), || {
                let _writer = handle.apply_lock.lock().expect("apply lock poisoned");
                self.catch_up_to_head_locked(&handle);
            });
        }

        let state = handle.state.read().expect("view state lock poisoned");
        Ok(filter_rows(&state, handle.def.key_column(), predicate, principal))
    }

    fn replay_as_of(
        &self,
        handle: &ViewHandle,
        as_of: i64,
        predicate: Option<&Expression>,
        principal: Option<PrincipalCtx<'_>>,
    ) -> Vec<(Scalar, Document)> {
        let def = &handle.def;
        let mut transient = ViewState::new(MaterializationMode::OnDemand);
        let mut from = 1u64;
        loop {
            let records = self.store.read_global(from, REBUILD_CHUNK);
            if records.is_empty() {
                break;
            }
            for record in &records {
                if def.source_event_types.contains(&record.event_type)
                    && ViewState::effective_event_time(def, record) <= as_of
                {
                    // Same deterministic fold; dead letters are transient.
                    let _ = transient.apply_event(def, record, handle.custom.as_deref());
                }
                from = record.global_offset + 1;
            }
        }
        filter_rows(&transient, def.key_column(), predicate, principal)
    }

    /// Discard state, refold the whole feed as a batch task, atomically
    /// swap. The rebuilt state is byte-identical to the incrementally
    /// maintained one.
    pub fn rebuild(&self, name: &str) -> Result<RebuildReport, ProjectionError> {
        let handle = self.view(name)?;
        handle.rebuilding.store(true, Ordering::SeqCst);
        let result = self.scheduler.run_batch(&format!("rebuild:{name}"), |ctx| {
            let started = Instant::now();
            let def = &handle.def;
            let mut fresh = ViewState::new(def.mode);
            let mut dead = Vec::new();
            let mut from = 1u64;

            // Phase 1: fold without the apply lock; live catch-up continues.
            loop {
                let records = self.store.read_global(from, REBUILD_CHUNK);
                if records.is_empty() {
                    break;
                }
                for record in &records {
                    fold_for_rebuild(def, handle.custom.as_deref(), &mut fresh, &mut dead, record);
                    from = record.global_offset + 1;
                }
                ctx.checkpoint();
            }

            // Phase 2: drain the delta under the apply lock and swap.
            let _writer = handle.apply_lock.lock().expect("apply lock poisoned");
            loop {
                let records = self.store.read_global(from, REBUILD_CHUNK);
                if records.is_empty() {
                    break;
                }
                for record in &records {
                    fold_for_rebuild(def, handle.custom.as_deref(), &mut fresh, &mut dead, record);
                    from = record.global_offset + 1;
                }
            }
            let rows = fresh.row_count();
            {
                let mut state = handle.state.write().expect("view state lock poisoned");
                fresh.mode = state.mode;
                *state = fresh;
            }
            *handle.dead_letters.lock().expect("dead letter lock poisoned") = dead;
            RebuildReport {
                rows,
                duration: started.elapsed(),
            }
        });
        handle.rebuilding.store(false, Ordering::SeqCst);
        Ok(result)
    }

    /// Switch materialization mode. Promotion catches the view up to the
    /// feed head as batch work; demotion keeps the state as a warm cache.
    /// Idempotent when the mode is unchanged.
    pub fn set_mode(
        &self,
        name: &str,
        mode: MaterializationMode,
    ) -> Result<MaterializationMode, ProjectionError> {
        let handle = self.view(name)?;
        if handle.rebuilding.load(Ordering::SeqCst) {
            return Err(ProjectionError::Busy(name.to_string()));
        }
        let previous = {
            let state = handle.state.read().expect("view state lock poisoned");
            state.mode
        };
        if previous == mode {
            return Ok(previous);
        }
        match mode {
            MaterializationMode::Materialized => {
                self.scheduler.run_batch(&format!("promote:{name}"), |_| {
                    let _writer = handle.apply_lock.lock().expect("apply lock poisoned");
                    self.catch_up_to_head_locked(&handle);
                    let mut state = handle.state.write().expect("view state lock poisoned");
                    state.mode = mode;
                });
            }
            MaterializationMode::OnDemand => {
                let _writer = handle.apply_lock.lock().expect("apply lock poisoned");
                let mut state = handle.state.write().expect("view state lock poisoned");
                state.mode = mode;
            }
        }
        Ok(previous)
    }

    pub fn mode(&self, name: &str) -> Result<MaterializationMode, ProjectionError> {
        let handle = self.view(name)?;
        let state = handle.state.read().expect("view state lock poisoned");
        Ok(state.mode)
    }

    pub fn dead_letters(&self, name: &str) -> Result<Vec<DeadLetter>, ProjectionError> {
        let handle = self.view(name)?;
        let letters = handle.dead_letters.lock().expect("dead letter lock poisoned").clone();
        Ok(letters)
    }

    /// Dead letters as JSON lines, one record per line.
    pub fn dead_letters_jsonl(&self, name: &str) -> Result<String, ProjectionError> {
        let mut out = String::new();
        for dl in self.dead_letters(name)? {
            out.push_str(&serde_json::to_string(&dl).expect("dead letters are serializable"));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn watermark(&self, name: &str) -> Result<i64, ProjectionError> {
        let handle = self.view(name)?;
        let state = handle.state.read().expect("view state lock poisoned");
        Ok(state.watermark_ms)
    }

    pub fn applied_offset(&self, name: &str) -> Result<u64, ProjectionError> {
        let handle = self.view(name)?;
        let state = handle.state.read().expect("view state lock poisoned");
        Ok(state.applied_offset)
    }

    pub fn view_version(&self, name: &str) -> Result<u64, ProjectionError> {
        let handle = self.view(name)?;
        let state = handle.state.read().expect("view state lock poisoned");
        Ok(state.version)
    }

    /// Canonical bytes of the current view state, for equivalence checks.
    pub fn state_bytes(&self, name: &str) -> Result<Vec<u8>, ProjectionError> {
        let handle = self.view(name)?;
        let state = handle.state.read().expect("view state lock poisoned");
        Ok(state.canonical_bytes())
    }

    /// Register a subscription stream fed from this engine's apply path.
    pub fn subscribe(
        &self,
        name: &str,
        predicate: Expression,
        principal: crate::security::Principal,
        masks: std::collections::BTreeSet<String>,
        capacity: usize,
    ) -> Result<SubscriptionStream, ProjectionError> {
        let handle = self.view(name)?;
        Ok(self.hub.subscribe(
            name,
            predicate,
            principal,
            masks,
            handle.def.key_column(),
            capacity,
        ))
    }
}

fn fold_for_rebuild(
    def: &ProjectionDefinition,
    custom: Option<&dyn RowFold>,
    state: &mut ViewState,
    dead: &mut Vec<DeadLetter>,
    record: &crate::store::EventRecord,
) {
    if def.source_event_types.contains(&record.event_type) {
        if let ApplyEffect::DeadLettered(dl) = state.apply_event(def, record, custom) {
            dead.push(dl);
        }
    }
    state.applied_offset = record.global_offset;
}

fn filter_rows(
    state: &ViewState,
    key_column: &str,
    predicate: Option<&Expression>,
    principal: Option<PrincipalCtx<'_>>,
) -> Vec<(Scalar, Document)> {
    // Point lookups prune to direct key fetches; the full predicate still
    // runs on each candidate row.
    if let Some(pred) = predicate {
        if let Some(candidates) = key_equality_candidates(pred, key_column) {
            let mut out = Vec::with_capacity(candidates.len());
            for key in candidates {
                if let Some(row) = state.rows.get(&ScalarKey(key.clone())) {
                    if pred.eval(row, principal) {
                        out.push((key, row.clone()));
                    }
                }
            }
            out.sort_by(|(a, _), (b, _)| ScalarKey(a.clone()).cmp(&ScalarKey(b.clone())));
            return out;
        }
    }
    state
        .rows
        .iter()
        .filter(|(_, row)| predicate.map(|p| p.eval(row, principal)).unwrap_or(true))
        .map(|(ScalarKey(key), row)| (key.clone(), row.clone()))
        .collect()
}

/// If every row satisfying `expr` must have its key in some finite set,
/// return that set (a superset of the matching keys). `None` means the
/// expression cannot be pruned by key.
fn key_equality_candidates(expr: &Expression, key_column: &str) -> Option<Vec<Scalar>> {
    use crate::expr::{CompOp, Operand};
    match expr {
        Expression::Comparison {
            left: Operand::Column(column),
            op: CompOp::Eq,
            right: Operand::Literal(value),
        }
        | Expression::Comparison {
            left: Operand::Literal(value),
            op: CompOp::Eq,
            right: Operand::Column(column),
        } if column == key_column => Some(vec![value.clone()]),
        // A conjunction is at least as restrictive as either side.
        Expression::And(a, b) => key_equality_candidates(a, key_column)
            .or_else(|| key_equality_candidates(b, key_column)),
        Expression::Or(a, b) => {
            let mut left = key_equality_candidates(a, key_column)?;
            let right = key_equality_candidates(b, key_column)?;
            left.extend(right);
            left.dedup_by(|x, y| x == y);
            Some(left)
        }
        Expression::Bool(false) => Some(Vec::new()),
        _ => None,
    }
}
