//! View state and the per-event fold.
//!
//! The fold is a pure, deterministic function of the global feed: given the
//! same records in the same offset order, two states are identical byte for
//! byte — that is what makes rebuilds comparable against incrementally
//! maintained views. Late events are classified against the watermark
//! (max effective event time seen minus allowed lateness): on time or
//! within the correction window they flow through the same update path;
//! beyond the window they are dead-lettered and the row stays untouched.

use std::collections::BTreeMap;

use serde::Serialize;

use super::definition::{
    ColumnKind, MaterializationMode, ProjectionDefinition, ACTOR_ID_KEY,
};
use crate::scalar::{canonical_json, Document, Scalar, ScalarKey};
use crate::store::EventRecord;

/// How an event was handled relative to the watermark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Applied,
    Corrected,
    DeadLettered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LateEventOutcome {
    pub disposition: Disposition,
    pub lateness_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Insert,
    Update,
    Delete,
    Correction,
}

/// Post-image of a row change, for subscribers.
#[derive(Debug, Clone, PartialEq)]
pub struct RowChange {
    pub key: Scalar,
    pub kind: ChangeKind,
    pub row: Document,
    pub version: u64,
}

/// An event set aside instead of applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeadLetter {
    pub global_offset: u64,
    pub actor_id: String,
    pub event_type: String,
    pub command_id: String,
    pub event_time: i64,
    pub lateness_ms: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ApplyEffect {
    Changed(RowChange),
    DeadLettered(DeadLetter),
}

impl ApplyEffect {
    pub fn outcome(&self) -> LateEventOutcome {
        match self {
            ApplyEffect::Changed(change) => LateEventOutcome {
                disposition: if change.kind == ChangeKind::Correction {
                    Disposition::Corrected
                } else {
                    Disposition::Applied
                },
                lateness_ms: 0,
            },
            ApplyEffect::DeadLettered(dl) => LateEventOutcome {
                disposition: Disposition::DeadLettered,
                lateness_ms: dl.lateness_ms,
            },
        }
    }
}

/// Sum accumulator: stays an integer until the first float contribution,
/// then stays a float. Additions happen in feed order on every fold path,
/// so float rounding is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
enum SumAcc {
    Int(i64),
    Float(f64),
}

impl SumAcc {
    fn add(&mut self, value: &Scalar) {
        *self = match (&*self, value) {
            (SumAcc::Int(a), Scalar::Int(b)) => SumAcc::Int(a.saturating_add(*b)),
            (SumAcc::Int(a), Scalar::Float(b)) => SumAcc::Float(*a as f64 + b),
            (SumAcc::Float(a), Scalar::Int(b)) => SumAcc::Float(a + *b as f64),
            (SumAcc::Float(a), Scalar::Float(b)) => SumAcc::Float(a + b),
            _ => return,
        };
    }

    fn value(&self) -> Scalar {
        match self {
            SumAcc::Int(v) => Scalar::Int(*v),
            SumAcc::Float(v) => Scalar::Float(*v),
        }
    }
}

/// Per-key aggregate scratch: event count, sum accumulators, and an
/// ordered multiset of contributing values per Min/Max column.
#[derive(Debug, Clone, PartialEq, Default)]
struct RowScratch {
    count: u64,
    sums: BTreeMap<String, SumAcc>,
    minmax: BTreeMap<String, BTreeMap<ScalarKey, u64>>,
}

impl Serialize for RowScratch {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        // Multisets become ordered [value, count] pair lists: JSON object
        // keys must be strings, and scalar keys are not.
        let minmax: BTreeMap<&str, Vec<(&ScalarKey, u64)>> = self
            .minmax
            .iter()
            .map(|(col, set)| (col.as_str(), set.iter().map(|(k, &n)| (k, n)).collect()))
            .collect();
        let mut st = serializer.serialize_struct("RowScratch", 3)?;
        st.serialize_field("count", &self.count)?;
        st.serialize_field("minmax", &minmax)?;
        st.serialize_field("sums", &self.sums)?;
        st.end()
    }
}

/// Materialized rows plus everything needed to keep folding: aggregate
/// scratch, the applied-offset cursor, and the watermark.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    pub rows: BTreeMap<ScalarKey, Document>,
    scratch: BTreeMap<ScalarKey, RowScratch>,
    pub applied_offset: u64,
    pub watermark_ms: i64,
    pub mode: MaterializationMode,
    pub version: u64,
}

impl ViewState {
    pub fn new(mode: MaterializationMode) -> Self {
        ViewState {
            rows: BTreeMap::new(),
            scratch: BTreeMap::new(),
            applied_offset: 0,
            watermark_ms: 0,
            mode,
            version: 0,
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Canonical byte serialization of the full fold state (rows, scratch,
    /// cursor, watermark, version). Two states are equivalent iff their
    /// canonical bytes match.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct CanonicalState<'a> {
            applied_offset: u64,
            rows: Vec<(&'a ScalarKey, &'a Document)>,
            scratch: Vec<(&'a ScalarKey, &'a RowScratch)>,
            version: u64,
            watermark_ms: i64,
        }
        canonical_json(&CanonicalState {
            applied_offset: self.applied_offset,
            rows: self.rows.iter().collect(),
            scratch: self.scratch.iter().collect(),
            version: self.version,
            watermark_ms: self.watermark_ms,
        })
        .expect("view state is always serializable")
    }

    /// Effective event time: the configured payload field when it holds a
    /// numeric value, otherwise the record's event_time.
    pub fn effective_event_time(def: &ProjectionDefinition, record: &EventRecord) -> i64 {
        if let Some(field) = &def.event_time_field {
            if let Some(value) = record.payload.get(field) {
                match value {
                    Scalar::Int(ms) => return *ms,
                    Scalar::Float(ms) => return *ms as i64,
                    _ => {}
                }
            }
        }
        record.event_time
    }

    /// Fold one matching record into the state. The caller filters on
    /// `source_event_types` and advances `applied_offset`.
    pub fn apply_event(
        &mut self,
        def: &ProjectionDefinition,
        record: &EventRecord,
        custom: Option<&dyn RowFold>,
    ) -> ApplyEffect {
        debug_assert!(def.source_event_types.contains(&record.event_type));

        let t = Self::effective_event_time(def, record);

        // Classify against the watermark before this event moves it.
        let correction = if t >= self.watermark_ms {
            false
        } else {
            let lateness = self.watermark_ms - t;
            if lateness <= def.correction_window_ms {
                true
            } else {
                self.advance_watermark(def, t);
                return ApplyEffect::DeadLettered(DeadLetter {
                    global_offset: record.global_offset,
                    actor_id: record.actor_id.clone(),
                    event_type: record.event_type.clone(),
                    command_id: record.command_id.clone(),
                    event_time: t,
                    lateness_ms: lateness,
                    reason: "late_beyond_correction_window".into(),
                });
            }
        };

        // Key extraction and numeric validation run before any state is
        // touched: a rejected event leaves the row untouched.
        let key = if def.key_expr == ACTOR_ID_KEY {
            Scalar::Str(record.actor_id.clone())
        } else {
            match record.payload.get(&def.key_expr) {
                Some(value) => value.clone(),
                None => {
                    let lateness = (self.watermark_ms - t).max(0);
                    self.advance_watermark(def, t);
                    return ApplyEffect::DeadLettered(DeadLetter {
                        global_offset: record.global_offset,
                        actor_id: record.actor_id.clone(),
                        event_type: record.event_type.clone(),
                        command_id: record.command_id.clone(),
                        event_time: t,
                        lateness_ms: lateness,
                        reason: format!("missing_key_field: {:?}", def.key_expr),
                    });
                }
            }
        };

        for column in &def.columns {
            if !column.kind.requires_numeric() {
                continue;
            }
            let field = column.kind.source_field().expect("numeric kinds read a field");
            let ok = record
                .payload
                .get(field)
                .map(Scalar::is_numeric)
                .unwrap_or(false);
            if !ok {
                let got = record
                    .payload
                    .get(field)
                    .map(|v| v.type_name())
                    .unwrap_or("absent");
                let lateness = (self.watermark_ms - t).max(0);
                self.advance_watermark(def, t);
                return ApplyEffect::DeadLettered(DeadLetter {
                    global_offset: record.global_offset,
                    actor_id: record.actor_id.clone(),
                    event_type: record.event_type.clone(),
                    command_id: record.command_id.clone(),
                    event_time: t,
                    lateness_ms: lateness,
                    reason: format!(
                        "type_error: column {:?} needs a numeric {:?}, got {got}",
                        column.name, field
                    ),
                });
            }
        }

        let skey = ScalarKey(key.clone());
        let is_new = !self.rows.contains_key(&skey);

        let scratch = self.scratch.entry(skey.clone()).or_default();
        scratch.count += 1;

        let row = self.rows.entry(skey.clone()).or_insert_with(|| {
            let mut row = Document::new();
            row.insert(def.key_column().to_string(), key.clone());
            row
        });

        for column in &def.columns {
            match &column.kind {
                ColumnKind::Count => {
                    row.insert(column.name.clone(), Scalar::Int(scratch.count as i64));
                }
                ColumnKind::Last(field) => {
                    if let Some(value) = record.payload.get(field) {
                        row.insert(column.name.clone(), value.clone());
                    }
                }
                ColumnKind::Sum(field) => {
                    let value = &record.payload[field.as_str()];
                    let acc = scratch
                        .sums
                        .entry(column.name.clone())
                        .or_insert(SumAcc::Int(0));
                    acc.add(value);
                    row.insert(column.name.clone(), acc.value());
                }
                ColumnKind::Min(field) | ColumnKind::Max(field) => {
                    let value = record.payload[field.as_str()].clone();
                    let set = scratch.minmax.entry(column.name.clone()).or_default();
                    *set.entry(ScalarKey(value)).or_insert(0) += 1;
                    let head = if matches!(column.kind, ColumnKind::Min(_)) {
                        set.keys().next()
                    } else {
                        set.keys().next_back()
                    };
                    let head = head.expect("multiset is non-empty after insert").0.clone();
                    row.insert(column.name.clone(), head);
                }
            }
        }

        if let Some(fold) = custom {
            fold.apply(row, record);
        }

        self.version += 1;
        let change = RowChange {
            key,
            kind: if correction {
                ChangeKind::Correction
            } else if is_new {
                ChangeKind::Insert
            } else {
                ChangeKind::Update
            },
            row: row.clone(),
            version: self.version,
        };

        self.advance_watermark(def, t);
        ApplyEffect::Changed(change)
    }

    fn advance_watermark(&mut self, def: &ProjectionDefinition, t: i64) {
        self.watermark_ms = self.watermark_ms.max(t - def.allowed_lateness_ms);
    }
}

/// Host-extension hook: a custom fold applied to the keyed row after the
/// built-in columns.
pub trait RowFold: Send + Sync {
    fn apply(&self, row: &mut Document, record: &EventRecord);
}

impl<F: Fn(&mut Document, &EventRecord) + Send + Sync> RowFold for F {
    fn apply(&self, row: &mut Document, record: &EventRecord) {
        self(row, record)
    }
}
