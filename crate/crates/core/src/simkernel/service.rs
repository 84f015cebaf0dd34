//! FIFO processor service model.
//!
//! A dispatched task first crosses the network for `size / bandwidth`
//! seconds, then waits for the CPU and occupies it for `size / speed`
//! seconds. Transfers overlap with the processing of earlier tasks.

use crate::domain::{Processor, TaskId};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ServiceModel {
    /// Time at which the CPU finishes its current backlog.
    pub free_at: f64,
}

impl ServiceModel {
    /// Enqueues one task dispatched at `now` and returns its completion time.
    pub fn admit(&mut self, size: f64, bandwidth: f64, speed: f64, now: f64) -> f64 {
        let start = (now + size / bandwidth).max(self.free_at);
        let done = start + size / speed;
        self.free_at = done;
        done
    }
}

/// Completion times for every task queued at `processor`, served FIFO from
/// an idle CPU with all tasks handed over at `now`.
pub fn process_service_model(
    processor: &Processor,
    size_of: impl Fn(TaskId) -> f64,
    now: f64,
) -> Vec<(TaskId, f64)> {
    let mut model = ServiceModel { free_at: now };
    processor
        .queue
        .iter()
        .map(|&t| {
            let done = model.admit(size_of(t), processor.bandwidth, processor.speed, now);
            (t, done)
        })
        .collect()
}
