//! Change-notification fanout for `SUBSCRIBE` streams.
//!
//! Each subscriber owns a bounded queue. Row changes matching the
//! subscriber's effective predicate are masked per its policy and
//! delivered in view-version order; a slow consumer whose queue fills is
//! disconnected with an overflow error rather than stalling the writer.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::Serialize;

use super::state::{ChangeKind, RowChange};
use crate::expr::Expression;
use crate::scalar::{Document, Scalar};
use crate::security::{apply_masks, Principal};

/// One delivered row change.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeNotification {
    pub projection: String,
    pub key: Scalar,
    pub change: ChangeKind,
    /// Post-image row, masked per the subscriber's policy.
    pub row: Document,
    pub version: u64,
}

pub const DEFAULT_SUBSCRIPTION_CAPACITY: usize = 1024;

struct SubEntry {
    id: u64,
    projection: String,
    predicate: Expression,
    principal: Principal,
    masks: BTreeSet<String>,
    key_column: String,
    sender: SyncSender<ChangeNotification>,
    overflowed: Arc<AtomicBool>,
    active: AtomicBool,
}

#[derive(Debug, PartialEq, Eq)]
pub enum StreamError {
    /// The subscriber fell behind and was disconnected.
    Overflow,
    /// The stream closed normally.
    Closed,
    Timeout,
}

/// Receiving end of a subscription.
pub struct SubscriptionStream {
    pub id: u64,
    rx: Receiver<ChangeNotification>,
    overflowed: Arc<AtomicBool>,
}

impl SubscriptionStream {
    pub fn recv_timeout(&self, timeout: Duration) -> Result<ChangeNotification, StreamError> {
        match self.rx.recv_timeout(timeout) {
            Ok(n) => Ok(n),
            Err(RecvTimeoutError::Timeout) => Err(StreamError::Timeout),
            Err(RecvTimeoutError::Disconnected) => {
                if self.overflowed.load(Ordering::SeqCst) {
                    Err(StreamError::Overflow)
                } else {
                    Err(StreamError::Closed)
                }
            }
        }
    }

    pub fn try_recv(&self) -> Result<ChangeNotification, StreamError> {
        match self.rx.try_recv() {
            Ok(n) => Ok(n),
            Err(std::sync::mpsc::TryRecvError::Empty) => Err(StreamError::Timeout),
            Err(std::sync::mpsc::TryRecvError::Disconnected) => {
                if self.overflowed.load(Ordering::SeqCst) {
                    Err(StreamError::Overflow)
                } else {
                    Err(StreamError::Closed)
                }
            }
        }
    }
}

/// Registry of live subscriptions, shared by the projection apply path.
#[derive(Default)]
pub struct SubscriptionHub {
    subs: RwLock<Vec<Arc<SubEntry>>>,
    next_id: AtomicU64,
}

impl SubscriptionHub {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn subscribe(
        &self,
        projection: &str,
        predicate: Expression,
        principal: Principal,
        masks: BTreeSet<String>,
        key_column: &str,
        capacity: usize,
    ) -> SubscriptionStream {
        let (tx, rx) = std::sync::mpsc::sync_channel(capacity.max(1));
        let overflowed = Arc::new(AtomicBool::new(false));
        let id = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        let entry = Arc::new(SubEntry {
            id,
            projection: projection.to_string(),
            predicate,
            principal,
            masks,
            key_column: key_column.to_string(),
            sender: tx,
            overflowed: Arc::clone(&overflowed),
            active: AtomicBool::new(true),
        });
        self.subs.write().expect("subscription lock poisoned").push(entry);
        SubscriptionStream { id, rx, overflowed }
    }

    pub fn unsubscribe(&self, id: u64) {
        let mut subs = self.subs.write().expect("subscription lock poisoned");
        subs.retain(|s| s.id != id);
    }

    /// Fan a row change out to matching subscribers. Called from the view
    /// apply path in version order; never blocks.
    pub fn publish(&self, projection: &str, change: &RowChange) {
        let subs = self.subs.read().expect("subscription lock poisoned");
        let mut dropped = false;
        for sub in subs.iter() {
            if !sub.active.load(Ordering::SeqCst) || sub.projection != projection {
                continue;
            }
            if !sub.predicate.eval(&change.row, Some(sub.principal.ctx())) {
                continue;
            }
            let mut row = change.row.clone();
            apply_masks(&mut row, &sub.masks, &sub.key_column);
            let notification = ChangeNotification {
                projection: projection.to_string(),
                key: change.key.clone(),
                change: change.kind,
                row,
                version: change.version,
            };
            match sub.sender.try_send(notification) {
                Ok(()) => {}
                Err(TrySendError::Full(_)) => {
                    sub.overflowed.store(true, Ordering::SeqCst);
                    sub.active.store(false, Ordering::SeqCst);
                    dropped = true;
                }
                Err(TrySendError::Disconnected(_)) => {
                    sub.active.store(false, Ordering::SeqCst);
                    dropped = true;
                }
            }
        }
        drop(subs);
        if dropped {
            // Removing the entry drops its sender, which closes the stream.
            let mut subs = self.subs.write().expect("subscription lock poisoned");
            subs.retain(|s| s.active.load(Ordering::SeqCst));
        }
    }

    pub fn active_count(&self) -> usize {
        self.subs.read().expect("subscription lock poisoned").len()
    }
}
