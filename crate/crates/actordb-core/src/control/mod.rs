//! SLO tracking and promote/demote control loop.
//!
//! Query latencies land in fixed-duration tumbling windows per projection.
//! An on-demand projection violating its p99 target over the last K
//! windows at sufficient query rate is promoted to materialized; a
//! materialized projection idle for M windows is demoted. A cooldown of C
//! windows between decisions keeps the loop from thrashing. Decisions are
//! a pure function of the sample trace and the policy knobs.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::projection::{MaterializationMode, ProjectionEngine, ProjectionError};
use crate::query::{LatencySink, QueryRoute};
use crate::security::{AuditAction, AuditDecision, AuditSink};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloTarget {
    /// Projection name or `*` for the default.
    pub projection: String,
    pub on_demand_p99_ms: f64,
    pub materialized_p99_ms: f64,
}

impl Default for SloTarget {
    fn default() -> Self {
        SloTarget {
            projection: "*".into(),
            on_demand_p99_ms: 200.0,
            materialized_p99_ms: 50.0,
        }
    }
}

impl SloTarget {
    pub fn validate(&self) -> Result<(), String> {
        if self.on_demand_p99_ms <= 0.0 || self.materialized_p99_ms <= 0.0 {
            return Err(format!("slo targets for {:?} must be positive", self.projection));
        }
        if self.materialized_p99_ms > self.on_demand_p99_ms {
            return Err(format!(
                "materialized target must not exceed the on-demand target for {:?}",
                self.projection
            ));
        }
        Ok(())
    }
}

/// Hysteresis knobs: K violating windows to promote, M idle windows to
/// demote, C windows of cooldown between decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotionPolicy {
    pub violation_windows: u32,
    pub min_query_rate_hz: f64,
    pub idle_windows: u32,
    pub cooldown_windows: u32,
}

impl Default for PromotionPolicy {
    fn default() -> Self {
        PromotionPolicy {
            violation_windows: 3,
            min_query_rate_hz: 1.0,
            idle_windows: 30,
            cooldown_windows: 6,
        }
    }
}

impl PromotionPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.violation_windows < 1 || self.idle_windows < 1 || self.cooldown_windows < 1 {
            return Err("promotion policy windows must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionAction {
    Promote,
    Demote,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub projection: String,
    pub action: DecisionAction,
    pub window_index: i64,
    pub reason: String,
}

/// Nearest-rank percentile over unsorted samples (pct in (0, 100]).
pub fn percentile_nearest_rank(samples: &[f64], pct: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone)]
struct WindowSummary {
    count: usize,
    rate_hz: f64,
    p99_ms: Option<f64>,
}

#[derive(Debug, Default)]
struct ProjSlo {
    current_index: Option<i64>,
    current: Vec<f64>,
    completed: VecDeque<WindowSummary>,
    last_decision_window: Option<i64>,
}

pub struct ControlPlane {
    window_ms: i64,
    min_samples: usize,
    policy: PromotionPolicy,
    targets: HashMap<String, SloTarget>,
    default_target: SloTarget,
    state: Mutex<HashMap<String, ProjSlo>>,
    pending: Mutex<Vec<Decision>>,
    audit: Arc<AuditSink>,
}

pub const DEFAULT_WINDOW_MS: i64 = 10_000;
pub const DEFAULT_MIN_SAMPLES: usize = 20;

impl ControlPlane {
    pub fn new(
        window_ms: i64,
        min_samples: usize,
        policy: PromotionPolicy,
        targets: Vec<SloTarget>,
        audit: Arc<AuditSink>,
    ) -> Self {
        let mut map = HashMap::new();
        let mut default_target = SloTarget::default();
        for t in targets {
            if t.projection == "*" {
                default_target = t;
            } else {
                map.insert(t.projection.clone(), t);
            }
        }
        ControlPlane {
            window_ms,
            min_samples,
            policy,
            targets: map,
            default_target,
            state: Mutex::new(HashMap::new()),
            pending: Mutex::new(Vec::new()),
            audit,
        }
    }

    pub fn with_defaults(audit: Arc<AuditSink>) -> Self {
        Self::new(
            DEFAULT_WINDOW_MS,
            DEFAULT_MIN_SAMPLES,
            PromotionPolicy::default(),
            Vec::new(),
            audit,
        )
    }

    pub fn window_ms(&self) -> i64 {
        self.window_ms
    }

    fn target(&self, projection: &str) -> &SloTarget {
        self.targets.get(projection).unwrap_or(&self.default_target)
    }

    fn window_index(&self, now: i64) -> i64 {
        now.div_euclid(self.window_ms)
    }

    /// Record one latency sample into the current window. Temporal-replay
    /// samples are ignored for SLO purposes: materialization cannot serve
    /// an AS OF query.
    pub fn record_sample(&self, projection: &str, route: QueryRoute, latency_ms: f64, now: i64) {
        if route == QueryRoute::TemporalReplay || latency_ms < 0.0 {
            return;
        }
        let idx = self.window_index(now);
        let mut state = self.state.lock().expect("slo state lock poisoned");
        let entry = state.entry(projection.to_string()).or_default();
        self.roll_to(entry, idx);
        entry.current.push(latency_ms);
    }

    fn roll_to(&self, entry: &mut ProjSlo, idx: i64) {
        let from = match entry.current_index {
            None => {
                entry.current_index = Some(idx);
                return;
            }
            Some(current) => current,
        };
        if idx <= from {
            return;
        }
        // Complete the open window, then empty summaries for any gap.
        let samples = std::mem::take(&mut entry.current);
        entry.completed.push_back(self.summarize(&samples));
        for _ in from + 1..idx {
            entry.completed.push_back(self.summarize(&[]));
        }
        let keep = (self.policy.violation_windows.max(self.policy.idle_windows) as usize) + 4;
        while entry.completed.len() > keep {
            entry.completed.pop_front();
        }
        entry.current_index = Some(idx);
    }

    fn summarize(&self, samples: &[f64]) -> WindowSummary {
        let count = samples.len();
        let p99_ms = if count >= self.min_samples {
            percentile_nearest_rank(samples, 99.0)
        } else {
            None
        };
        WindowSummary {
            count,
            rate_hz: count as f64 / (self.window_ms as f64 / 1000.0),
            p99_ms,
        }
    }

    /// Evaluate the policy at a window boundary, producing decisions for
    /// the projections registered in `projections`.
    pub fn evaluate(&self, projections: &ProjectionEngine, now: i64) -> Vec<Decision> {
        let idx = self.window_index(now);
        let mut decisions = Vec::new();
        let mut state = self.state.lock().expect("slo state lock poisoned");

        for def in projections.definitions() {
            let name = def.name.clone();
            let entry = state.entry(name.clone()).or_default();
            if entry.current_index.is_none() {
                // Never sampled: start the window clock now so idleness
                // accumulates from here.
                entry.current_index = Some(idx);
            }
            self.roll_to(entry, idx);

            if let Some(last) = entry.last_decision_window {
                if idx - last < self.policy.cooldown_windows as i64 {
                    continue;
                }
            }
            let Ok(mode) = projections.mode(&name) else { continue };
            let target = self.target(&name);

            match mode {
                MaterializationMode::OnDemand => {
                    let k = self.policy.violation_windows as usize;
                    if entry.completed.len() < k {
                        continue;
                    }
                    let recent = entry.completed.iter().rev().take(k);
                    let all_violating = recent.clone().count() == k
                        && recent.clone().all(|w| {
                            w.rate_hz >= self.policy.min_query_rate_hz
                                && w.p99_ms.map(|p| p > target.on_demand_p99_ms).unwrap_or(false)
                        });
                    if all_violating {
                        let worst = recent
                            .clone()
                            .filter_map(|w| w.p99_ms)
                            .fold(f64::MIN, f64::max);
                        entry.last_decision_window = Some(idx);
                        decisions.push(Decision {
                            projection: name.clone(),
                            action: DecisionAction::Promote,
                            window_index: idx,
                            reason: format!(
                                "p99 {worst:.1}ms > {:.1}ms over {k} windows",
                                target.on_demand_p99_ms
                            ),
                        });
                    }
                }
                MaterializationMode::Materialized => {
                    let m = self.policy.idle_windows as usize;
                    if entry.completed.len() < m {
                        continue;
                    }
                    let idle = entry
                        .completed
                        .iter()
                        .rev()
                        .take(m)
                        .all(|w| w.count < self.min_samples || w.rate_hz < self.policy.min_query_rate_hz);
                    if idle {
                        entry.last_decision_window = Some(idx);
                        decisions.push(Decision {
                            projection: name.clone(),
                            action: DecisionAction::Demote,
                            window_index: idx,
                            reason: format!("idle or below {}Hz for {m} windows", self.policy.min_query_rate_hz),
                        });
                    }
                }
            }
        }

        for d in &decisions {
            self.audit.emit(
                now,
                "control-plane",
                AuditAction::PromotionDecision,
                &d.projection,
                AuditDecision::NotApplicable,
                &format!("{:?}: {}", d.action, d.reason),
            );
        }
        decisions
    }

    /// Apply decisions via the projection engine. A busy view defers its
    /// decision to the next tick; unknown projections are audited and
    /// skipped.
    pub fn apply(&self, decisions: Vec<Decision>, projections: &ProjectionEngine, now: i64) {
        for decision in decisions {
            let mode = match decision.action {
                DecisionAction::Promote => MaterializationMode::Materialized,
                DecisionAction::Demote => MaterializationMode::OnDemand,
            };
            match projections.set_mode(&decision.projection, mode) {
                Ok(_) => {}
                Err(ProjectionError::Busy(_)) => {
                    self.audit.emit(
                        now,
                        "control-plane",
                        AuditAction::PromotionDecision,
                        &decision.projection,
                        AuditDecision::NotApplicable,
                        "deferred: view busy rebuilding",
                    );
                    self.pending.lock().expect("pending lock poisoned").push(decision);
                }
                Err(e) => {
                    self.audit.emit(
                        now,
                        "control-plane",
                        AuditAction::PromotionDecision,
                        &decision.projection,
                        AuditDecision::NotApplicable,
                        &format!("skipped: {e}"),
                    );
                }
            }
        }
    }

    /// One control tick: retry deferred decisions, evaluate, apply.
    pub fn tick(&self, projections: &ProjectionEngine, now: i64) -> usize {
        let mut decisions: Vec<Decision> =
            std::mem::take(&mut *self.pending.lock().expect("pending lock poisoned"));
        decisions.extend(self.evaluate(projections, now));
        let n = decisions.len();
        self.apply(decisions, projections, now);
        n
    }

    /// p99 over the in-progress window, for health reporting.
    pub fn current_window_p99(&self, projection: &str) -> Option<f64> {
        let state = self.state.lock().expect("slo state lock poisoned");
        state
            .get(projection)
            .and_then(|entry| percentile_nearest_rank(&entry.current, 99.0))
    }

    /// Health report over every registered projection.
    pub fn health(&self, projections: &ProjectionEngine, now: i64) -> HealthReport {
        let store = projections.store();
        let store_max_offset = store.max_global_offset();
        let mut entries = Vec::new();
        for def in projections.definitions() {
            let applied = projections.applied_offset(&def.name).unwrap_or(0);
            entries.push(ProjectionHealth {
                projection: def.name.clone(),
                mode: projections.mode(&def.name).unwrap_or(def.mode),
                applied_offset: applied,
                lag: store_max_offset.saturating_sub(applied),
                watermark_ms: projections.watermark(&def.name).unwrap_or(0),
                current_window_p99_ms: self.current_window_p99(&def.name),
                dead_letters: projections.dead_letters(&def.name).map(|d| d.len()).unwrap_or(0),
            });
        }
        HealthReport {
            now,
            store_max_offset,
            audit_head_seq: self.audit.head_seq(),
            projections: entries,
        }
    }
}

impl LatencySink for ControlPlane {
    fn record(&self, projection: &str, route: QueryRoute, latency_ms: f64, now_ms: i64) {
        self.record_sample(projection, route, latency_ms, now_ms);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionHealth {
    pub projection: String,
    pub mode: MaterializationMode,
    pub applied_offset: u64,
    pub lag: u64,
    pub watermark_ms: i64,
    pub current_window_p99_ms: Option<f64>,
    pub dead_letters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealthReport {
    pub now: i64,
    pub store_max_offset: u64,
    pub audit_head_seq: u64,
    pub projections: Vec<ProjectionHealth>,
}
