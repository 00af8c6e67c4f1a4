//! Two-level task priority: Interactive strictly before Batch.
//!
//! Interactive work (queries, temporal replays) starts immediately. Batch
//! work (rebuilds, promotion catch-ups) blocks while any interactive task
//! is queued or running, and long batch tasks call `checkpoint` between
//! chunks to yield to interactive arrivals. Every transition is recorded
//! in a bounded log that tests assert against: no batch execution event
//! ever carries a non-zero interactive-pending count.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Priority {
    Interactive,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskEventKind {
    Start,
    Checkpoint,
    Yield,
    Resume,
    End,
}

#[derive(Debug, Clone)]
pub struct TaskEvent {
    pub seq: u64,
    pub label: String,
    pub priority: Priority,
    pub kind: TaskEventKind,
    /// Interactive tasks queued or running when this event was logged.
    pub interactive_pending: usize,
}

const LOG_CAP: usize = 100_000;

#[derive(Default)]
struct SchedState {
    interactive_active: usize,
    next_seq: u64,
    log: VecDeque<TaskEvent>,
}

impl SchedState {
    fn log_event(&mut self, label: &str, priority: Priority, kind: TaskEventKind) {
        if self.log.len() == LOG_CAP {
            self.log.pop_front();
        }
        self.next_seq += 1;
        self.log.push_back(TaskEvent {
            seq: self.next_seq,
            label: label.to_string(),
            priority,
            kind,
            interactive_pending: self.interactive_active,
        });
    }
}

#[derive(Default)]
pub struct TaskScheduler {
    state: Mutex<SchedState>,
    idle: Condvar,
}

/// Handed to batch closures so they can yield between chunks.
pub struct BatchCtx<'a> {
    scheduler: &'a TaskScheduler,
    label: String,
}

impl BatchCtx<'_> {
    /// Yield if interactive work is pending; returns once the queue drains.
    pub fn checkpoint(&self) {
        let mut st = self.scheduler.state.lock().expect("scheduler lock poisoned");
        if st.interactive_active == 0 {
            st.log_event(&self.label, Priority::Batch, TaskEventKind::Checkpoint);
            return;
        }
        st.log_event(&self.label, Priority::Batch, TaskEventKind::Yield);
        while st.interactive_active > 0 {
            st = self.scheduler.idle.wait(st).expect("scheduler lock poisoned");
        }
        st.log_event(&self.label, Priority::Batch, TaskEventKind::Resume);
    }
}

impl TaskScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Run an interactive task on the calling thread. Never waits on batch
    /// work.
    pub fn run_interactive<T>(&self, label: &str, task: impl FnOnce() -> T) -> T {
        {
            let mut st = self.state.lock().expect("scheduler lock poisoned");
            st.interactive_active += 1;
            st.log_event(label, Priority::Interactive, TaskEventKind::Start);
        }
        let result = task();
        {
            let mut st = self.state.lock().expect("scheduler lock poisoned");
            st.interactive_active -= 1;
            st.log_event(label, Priority::Interactive, TaskEventKind::End);
            if st.interactive_active == 0 {
                self.idle.notify_all();
            }
        }
        result
    }

    /// Run a batch task on the calling thread, waiting until no
    /// interactive work is queued or running before starting.
    pub fn run_batch<T>(&self, label: &str, task: impl FnOnce(&BatchCtx<'_>) -> T) -> T {
        {
            let mut st = self.state.lock().expect("scheduler lock poisoned");
            while st.interactive_active > 0 {
                st = self.idle.wait(st).expect("scheduler lock poisoned");
            }
            st.log_event(label, Priority::Batch, TaskEventKind::Start);
        }
        let ctx = BatchCtx {
            scheduler: self,
            label: label.to_string(),
        };
        let result = task(&ctx);
        {
            let mut st = self.state.lock().expect("scheduler lock poisoned");
            st.log_event(label, Priority::Batch, TaskEventKind::End);
        }
        result
    }

    pub fn log(&self) -> Vec<TaskEvent> {
        let st = self.state.lock().expect("scheduler lock poisoned");
        st.log.iter().cloned().collect()
    }

    /// Scheduler-log invariant: batch work never executes while
    /// interactive work is pending. Start/Checkpoint/Resume are the points
    /// where a batch task is (re)entering execution.
    pub fn assert_batch_never_ran_while_interactive_pending(&self) {
        for event in self.log() {
            if event.priority == Priority::Batch
                && matches!(
                    event.kind,
                    TaskEventKind::Start | TaskEventKind::Checkpoint | TaskEventKind::Resume
                )
            {
                assert_eq!(
                    event.interactive_pending, 0,
                    "batch task {:?} executed with {} interactive task(s) pending",
                    event.label, event.interactive_pending
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn interactive_runs_immediately() {
        let sched = TaskScheduler::new();
        let out = sched.run_interactive("q", || 42);
        assert_eq!(out, 42);
        let log = sched.log();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].kind, TaskEventKind::Start);
        assert_eq!(log[1].kind, TaskEventKind::End);
    }

    #[test]
    fn batch_yields_to_interactive_at_checkpoints() {
        let sched = Arc::new(TaskScheduler::new());
        let interactive_ran = Arc::new(AtomicBool::new(false));

        let s2 = Arc::clone(&sched);
        let flag = Arc::clone(&interactive_ran);
        let batch = std::thread::spawn(move || {
            s2.run_batch("rebuild", |ctx| {
                for _ in 0..200 {
                    std::thread::sleep(Duration::from_millis(1));
                    ctx.checkpoint();
                    if flag.load(Ordering::SeqCst) {
                        break;
                    }
                }
            });
        });

        std::thread::sleep(Duration::from_millis(20));
        sched.run_interactive("query", || {
            std::thread::sleep(Duration::from_millis(5));
        });
        interactive_ran.store(true, Ordering::SeqCst);
        batch.join().unwrap();

        sched.assert_batch_never_ran_while_interactive_pending();
        // The interactive task ran between batch chunks: its Start appears
        // after the batch Start and before the batch End.
        let log = sched.log();
        let batch_start = log
            .iter()
            .position(|e| e.label == "rebuild" && e.kind == TaskEventKind::Start)
            .unwrap();
        let batch_end = log
            .iter()
            .position(|e| e.label == "rebuild" && e.kind == TaskEventKind::End)
            .unwrap();
        let q_start = log
            .iter()
            .position(|e| e.label == "query" && e.kind == TaskEventKind::Start)
            .unwrap();
        assert!(batch_start < q_start && q_start < batch_end, "interleaving observed");
    }

    #[test]
    fn batch_start_waits_for_interactive_drain() {
        let sched = Arc::new(TaskScheduler::new());
        let s2 = Arc::clone(&sched);

        let slow_interactive = std::thread::spawn(move || {
            s2.run_interactive("slow", || std::thread::sleep(Duration::from_millis(30)));
        });
        std::thread::sleep(Duration::from_millis(5));
        sched.run_batch("maintenance", |_| {});
        slow_interactive.join().unwrap();

        sched.assert_batch_never_ran_while_interactive_pending();
        let log = sched.log();
        let slow_end = log
            .iter()
            .position(|e| e.label == "slow" && e.kind == TaskEventKind::End)
            .unwrap();
        let batch_start = log
            .iter()
            .position(|e| e.label == "maintenance" && e.kind == TaskEventKind::Start)
            .unwrap();
        assert!(slow_end < batch_start, "batch waited for the interactive task");
    }
}
