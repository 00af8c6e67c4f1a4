//! Single-node event-sourced database engine.
//!
//! Write side: a per-actor single-writer append-only event store with
//! snapshots and dual indexing. Read side: incrementally maintained keyed
//! projections with watermark-based late-event handling and dynamic
//! materialization. Every write enters through a signed command envelope;
//! queries pass through policy-driven row filtering and column masking.
//! A control plane turns latency samples into promote/demote decisions,
//! and a Merkle-hashed process DAG orders component startup.

pub mod bench;
pub mod config;
pub mod control;
pub mod dag;
pub mod engine;
pub mod expr;
pub mod projection;
pub mod query;
pub mod scalar;
pub mod server;
pub mod security;
pub mod store;
pub mod time;

pub use config::{EngineConfig, StorageConfig};
pub use engine::{CommandOutcome, Engine, EngineError};
pub use scalar::{Document, Scalar};
pub use security::{Principal, SignedCommand};
pub use server::Server;
pub use store::{EventRecord, EventStore, NewEvent};
