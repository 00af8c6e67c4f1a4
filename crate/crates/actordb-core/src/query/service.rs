//! Planning and execution with transparent RLS and masking.
//!
//! Policy evaluation happens before any data access: a denied principal
//! never touches the backend. The effective predicate is the user's WHERE
//! clause ANDed with the combined row-level-security predicate, and masks
//! are applied to every outgoing row.

use std::collections::BTreeSet;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use super::ast::{QueryStatement, SelectList, SelectStatement};
use super::QueryError;
use crate::expr::Expression;
use crate::projection::{
    MaterializationMode, ProjectionEngine, SubscriptionStream, DEFAULT_SUBSCRIPTION_CAPACITY,
};
use crate::scalar::Document;
use crate::security::{apply_masks, AuditAction, AuditDecision, Principal, SecurityLayer};
use crate::time::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryRoute {
    FromMaterializedState,
    OnDemandCatchUp,
    TemporalReplay,
}

impl QueryRoute {
    pub fn as_str(&self) -> &'static str {
        match self {
            QueryRoute::FromMaterializedState => "materialized",
            QueryRoute::OnDemandCatchUp => "on_demand",
            QueryRoute::TemporalReplay => "temporal_replay",
        }
    }
}

/// A planned SELECT: statement plus injected security and routing.
#[derive(Debug, Clone)]
pub struct QueryPlan {
    pub statement: SelectStatement,
    /// User predicate AND rls predicate.
    pub effective_predicate: Expression,
    pub masks: BTreeSet<String>,
    pub route: QueryRoute,
    pub key_column: String,
    pub principal: Principal,
}

/// Receives route-tagged latency samples from query execution.
pub trait LatencySink: Send + Sync {
    fn record(&self, projection: &str, route: QueryRoute, latency_ms: f64, now_ms: i64);
}

/// Parse/plan/execute pipeline over the projection engine.
pub struct QueryService {
    projections: Arc<ProjectionEngine>,
    security: Arc<SecurityLayer>,
    latency: RwLock<Option<Arc<dyn LatencySink>>>,
    clock: Arc<dyn Clock>,
}

impl QueryService {
    pub fn new(
        projections: Arc<ProjectionEngine>,
        security: Arc<SecurityLayer>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        QueryService {
            projections,
            security,
            latency: RwLock::new(None),
            clock,
        }
    }

    /// Wire the control-plane latency sink (done after construction; the
    /// control plane needs the projection engine first).
    pub fn set_latency_sink(&self, sink: Arc<dyn LatencySink>) {
        *self.latency.write().expect("latency sink lock poisoned") = Some(sink);
    }

    pub fn projections(&self) -> &Arc<ProjectionEngine> {
        &self.projections
    }

    /// Plan a SELECT: resolve the projection, evaluate policy (deny before
    /// any data touch), validate column references, inject RLS and masks,
    /// and pick the route.
    pub fn plan(
        &self,
        statement: SelectStatement,
        principal: &Principal,
    ) -> Result<QueryPlan, QueryError> {
        let def = self
            .projections
            .definition(&statement.projection)
            .map_err(|_| QueryError::UnknownProjection(statement.projection.clone()))?;

        let decision = self.security.evaluate_policy(principal, &statement.projection);
        if !decision.allowed {
            self.security.audit().emit(
                self.clock.now_ms(),
                &principal.principal_id,
                AuditAction::Query,
                &statement.projection,
                AuditDecision::Deny,
                "policy denied",
            );
            return Err(QueryError::AccessDenied);
        }

        let known: BTreeSet<&str> = def.column_names().into_iter().collect();
        if let SelectList::Columns(cols) = &statement.select_list {
            for col in cols {
                if !known.contains(col.as_str()) {
                    return Err(QueryError::UnknownColumn(col.clone()));
                }
            }
        }
        if let Some(pred) = &statement.predicate {
            for col in pred.column_refs() {
                if !known.contains(col.as_str()) {
                    return Err(QueryError::UnknownColumn(col));
                }
            }
        }

        let route = if statement.as_of.is_some() {
            QueryRoute::TemporalReplay
        } else {
            match self
                .projections
                .mode(&statement.projection)
                .map_err(|_| QueryError::UnknownProjection(statement.projection.clone()))?
            {
                MaterializationMode::Materialized => QueryRoute::FromMaterializedState,
                MaterializationMode::OnDemand => QueryRoute::OnDemandCatchUp,
            }
        };

        let effective_predicate = match statement.predicate.clone() {
            Some(user) => user.and(decision.row_predicate),
            None => decision.row_predicate,
        };

        Ok(QueryPlan {
            key_column: def.key_column().to_string(),
            statement,
            effective_predicate,
            masks: decision.masks,
            route,
            principal: principal.clone(),
        })
    }

    /// Execute a plan: route to the projection engine, mask, apply the
    /// select list and limit, record a latency sample, audit.
    pub fn execute(&self, plan: &QueryPlan) -> Result<Vec<Document>, QueryError> {
        let started = Instant::now();
        let rows = self.projections.query_rows(
            &plan.statement.projection,
            Some(&plan.effective_predicate),
            Some(plan.principal.ctx()),
            plan.statement.as_of,
        )?;

        let limit = plan.statement.limit.unwrap_or(u64::MAX) as usize;
        let mut out = Vec::with_capacity(rows.len().min(limit));
        for (_, mut row) in rows.into_iter().take(limit) {
            apply_masks(&mut row, &plan.masks, &plan.key_column);
            if let SelectList::Columns(cols) = &plan.statement.select_list {
                let wanted: BTreeSet<&str> = cols.iter().map(String::as_str).collect();
                row.retain(|name, _| wanted.contains(name.as_str()));
            }
            out.push(row);
        }

        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        let now = self.clock.now_ms();
        if let Some(sink) = self.latency.read().expect("latency sink lock poisoned").as_ref() {
            sink.record(&plan.statement.projection, plan.route, elapsed_ms, now);
        }
        self.security.audit().emit(
            now,
            &plan.principal.principal_id,
            AuditAction::Query,
            &plan.statement.projection,
            AuditDecision::Allow,
            &format!("route {} rows {}", plan.route.as_str(), out.len()),
        );
        Ok(out)
    }

    /// Parse, plan, and execute a SELECT statement.
    pub fn query(&self, sql: &str, principal: &Principal) -> Result<Vec<Document>, QueryError> {
        match super::parser::parse(sql)? {
            QueryStatement::Select(statement) => {
                let plan = self.plan(statement, principal)?;
                self.execute(&plan)
            }
            QueryStatement::Subscribe(_) => Err(QueryError::ParseError {
                pos: 0,
                expected: "expected SELECT, found SUBSCRIBE (use subscribe())".into(),
            }),
        }
    }

    /// Parse a SUBSCRIBE statement and register a notification stream.
    pub fn subscribe(
        &self,
        sql: &str,
        principal: &Principal,
        capacity: Option<usize>,
    ) -> Result<SubscriptionStream, QueryError> {
        let statement = match super::parser::parse(sql)? {
            QueryStatement::Subscribe(s) => s,
            QueryStatement::Select(_) => {
                return Err(QueryError::ParseError {
                    pos: 0,
                    expected: "expected SUBSCRIBE, found SELECT (use query())".into(),
                })
            }
        };
        let def = self
            .projections
            .definition(&statement.projection)
            .map_err(|_| QueryError::UnknownProjection(statement.projection.clone()))?;

        let decision = self.security.evaluate_policy(principal, &statement.projection);
        let now = self.clock.now_ms();
        if !decision.allowed {
            self.security.audit().emit(
                now,
                &principal.principal_id,
                AuditAction::Query,
                &statement.projection,
                AuditDecision::Deny,
                "subscribe denied",
            );
            return Err(QueryError::AccessDenied);
        }
        if let Some(pred) = &statement.predicate {
            let known: BTreeSet<&str> = def.column_names().into_iter().collect();
            for col in pred.column_refs() {
                if !known.contains(col.as_str()) {
                    return Err(QueryError::UnknownColumn(col));
                }
            }
        }

        let effective = match statement.predicate {
            Some(user) => user.and(decision.row_predicate),
            None => decision.row_predicate,
        };
        let stream = self.projections.subscribe(
            &statement.projection,
            effective,
            principal.clone(),
            decision.masks,
            capacity.unwrap_or(DEFAULT_SUBSCRIPTION_CAPACITY),
        )?;
        self.security.audit().emit(
            now,
            &principal.principal_id,
            AuditAction::Query,
            &statement.projection,
            AuditDecision::Allow,
            "subscribed",
        );
        Ok(stream)
    }
}
