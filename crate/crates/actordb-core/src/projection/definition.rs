//! Declarative projection definitions: keyed reducers over event streams.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ProjectionError;

/// Key expression token selecting the actor id instead of a payload field.
pub const ACTOR_ID_KEY: &str = "$actor_id";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterializationMode {
    OnDemand,
    Materialized,
}

/// One derived column. `Last` overwrites with the newest value; `Count`
/// counts events; `Sum`/`Min`/`Max` aggregate a numeric payload field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Last(String),
    Count,
    Sum(String),
    Min(String),
    Max(String),
}

impl ColumnKind {
    pub fn last(field: &str) -> Self {
        ColumnKind::Last(field.to_string())
    }

    pub fn sum(field: &str) -> Self {
        ColumnKind::Sum(field.to_string())
    }

    pub fn min(field: &str) -> Self {
        ColumnKind::Min(field.to_string())
    }

    pub fn max(field: &str) -> Self {
        ColumnKind::Max(field.to_string())
    }

    /// Payload field this column reads, if any.
    pub fn source_field(&self) -> Option<&str> {
        match self {
            ColumnKind::Count => None,
            ColumnKind::Last(f)
            | ColumnKind::Sum(f)
            | ColumnKind::Min(f)
            | ColumnKind::Max(f) => Some(f),
        }
    }

    /// Whether the source field must hold a numeric value at apply time.
    pub fn requires_numeric(&self) -> bool {
        matches!(self, ColumnKind::Sum(_) | ColumnKind::Min(_) | ColumnKind::Max(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

fn default_lateness() -> i64 {
    5_000
}

fn default_correction_window() -> i64 {
    60_000
}

fn default_mode() -> MaterializationMode {
    MaterializationMode::OnDemand
}

/// Declarative keyed reducer over event streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDefinition {
    pub name: String,
    pub source_event_types: BTreeSet<String>,
    /// Payload field whose value keys rows, or [`ACTOR_ID_KEY`].
    pub key_expr: String,
    pub columns: Vec<ColumnSpec>,
    /// Optional payload field overriding the record's event_time.
    #[serde(default)]
    pub event_time_field: Option<String>,
    #[serde(default = "default_lateness")]
    pub allowed_lateness_ms: i64,
    #[serde(default = "default_correction_window")]
    pub correction_window_ms: i64,
    #[serde(default = "default_mode")]
    pub mode: MaterializationMode,
}

impl ProjectionDefinition {
    pub fn new(name: &str, source_event_types: &[&str], key_expr: &str) -> Self {
        ProjectionDefinition {
            name: name.to_string(),
            source_event_types: source_event_types.iter().map(|s| s.to_string()).collect(),
            key_expr: key_expr.to_string(),
            columns: Vec::new(),
            event_time_field: None,
            allowed_lateness_ms: default_lateness(),
            correction_window_ms: default_correction_window(),
            mode: default_mode(),
        }
    }

    pub fn with_column(mut self, name: &str, kind: ColumnKind) -> Self {
        self.columns.push(ColumnSpec {
            name: name.to_string(),
            kind,
        });
        self
    }

    pub fn with_lateness(mut self, allowed_lateness_ms: i64, correction_window_ms: i64) -> Self {
        self.allowed_lateness_ms = allowed_lateness_ms;
        self.correction_window_ms = correction_window_ms;
        self
    }

    pub fn with_mode(mut self, mode: MaterializationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_event_time_field(mut self, field: &str) -> Self {
        self.event_time_field = Some(field.to_string());
        self
    }

    /// Name of the implicit key column in result rows.
    pub fn key_column(&self) -> &str {
        if self.key_expr == ACTOR_ID_KEY {
            "actor_id"
        } else {
            &self.key_expr
        }
    }

    /// All queryable column names: the key column plus defined columns.
    pub fn column_names(&self) -> Vec<&str> {
        let mut names = vec![self.key_column()];
        names.extend(self.columns.iter().map(|c| c.name.as_str()));
        names
    }

    pub fn validate(&self) -> Result<(), ProjectionError> {
        if self.name.is_empty() {
            return Err(ProjectionError::InvalidDefinition("name must be non-empty".into()));
        }
        if self.source_event_types.is_empty() {
            return Err(ProjectionError::InvalidDefinition(format!(
                "projection {:?} needs at least one source event type",
                self.name
            )));
        }
        if self.key_expr.is_empty() {
            return Err(ProjectionError::InvalidDefinition(format!(
                "projection {:?} has an empty key_expr",
                self.name
            )));
        }
        if self.allowed_lateness_ms < 0 || self.correction_window_ms < 0 {
            return Err(ProjectionError::InvalidDefinition(format!(
                "projection {:?}: lateness and correction window must be non-negative",
                self.name
            )));
        }
        let mut seen = BTreeSet::new();
        seen.insert(self.key_column().to_string());
        for column in &self.columns {
            if column.name.is_empty() {
                return Err(ProjectionError::InvalidDefinition(format!(
                    "projection {:?} has a column with an empty name",
                    self.name
                )));
            }
            if !seen.insert(column.name.clone()) {
                return Err(ProjectionError::InvalidDefinition(format!(
                    "projection {:?}: duplicate column {:?} (the key column is implicit)",
                    self.name, column.name
                )));
            }
        }
        Ok(())
    }
}
