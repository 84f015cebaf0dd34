//! Task handler: duplicate elimination, SLA gate, round-robin hand-off to
//! live schedulers, and reclaim of queued work from a dead scheduler.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::domain::{SchedulerId, Task, TaskId};
use crate::error::{Error, Result};

/// Admission thresholds. Both comparisons are boundary inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaPolicy {
    /// Minimum relative headroom of the offered cost over the provider price.
    #[serde(default)]
    pub cost_margin: f64,
    /// Maximum allowed ratio of estimated response time to the deadline.
    #[serde(default = "default_time_margin")]
    pub time_margin: f64,
}

fn default_time_margin() -> f64 {
    1.0
}

impl Default for SlaPolicy {
    fn default() -> Self {
        Self {
            cost_margin: 0.0,
            time_margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    RejectedCost,
    RejectedTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionOutcome {
    pub task_id: TaskId,
    pub decision: Decision,
    /// Present iff the task was accepted and a live scheduler took it.
    pub assigned_scheduler: Option<SchedulerId>,
}

/// Processing cost and unloaded response time of the cheapest live processor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheapestEstimate {
    pub price_cost: f64,
    pub response_time: f64,
}

/// Keeps the first task of every `(user_id, payload_fingerprint)` identity,
/// preserving arrival order.
pub fn deduplicate(batch: &[Task]) -> Vec<Task> {
    let mut seen = HashSet::new();
    batch
        .iter()
        .filter(|t| seen.insert(t.identity()))
        .cloned()
        .collect()
}

/// Applies the cost branch, then the time branch.
///
/// `estimate` is `None` when no processor is live; the task is then
/// rejected on time since no response can be promised.
pub fn sla_admit(task: &Task, estimate: Option<CheapestEstimate>, policy: &SlaPolicy) -> Decision {
    match try_sla_admit(task, estimate, policy) {
        Ok(d) => d,
        Err(_) => Decision::RejectedTime,
    }
}

pub fn try_sla_admit(
    task: &Task,
    estimate: Option<CheapestEstimate>,
    policy: &SlaPolicy,
) -> Result<Decision> {
    let est = estimate.ok_or(Error::NoCapacityEstimate)?;
    if task.cost < (1.0 + policy.cost_margin) * est.price_cost {
        Ok(Decision::RejectedCost)
    } else if est.response_time > policy.time_margin * task.deadline_hint {
        Ok(Decision::RejectedTime)
    } else {
        Ok(Decision::Accepted)
    }
}

/// Assigns tasks cyclically over `live`, starting at `cursor`.
pub fn dispatch_round_robin(
    accepted: &[TaskId],
    live: &[SchedulerId],
    cursor: usize,
) -> Result<(Vec<(TaskId, SchedulerId)>, usize)> {
    if live.is_empty() {
        return Err(Error::NoSchedulerAvailable);
    }
    let n = live.len();
    let start = cursor % n;
    let assignments = accepted
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, live[(start + k) % n]))
        .collect();
    Ok((assignments, (start + accepted.len()) % n))
}

/// Returns a dead scheduler's undispatched tasks to the handler, in order.
pub fn reclaim(_dead: SchedulerId, output_queue: &mut VecDeque<TaskId>) -> Vec<TaskId> {
    output_queue.drain(..).collect()
}

/// Handler state carried across arrivals.
#[derive(Debug, Clone, Default)]
pub struct TaskHandler {
    /// Admitted tasks not yet handed to a scheduler.
    pub queue: VecDeque<TaskId>,
    pub cursor: usize,
    seen: HashSet<(u32, u64)>,
}

impl TaskHandler {
    /// True when the task repeats an identity seen earlier in the run.
    pub fn is_duplicate(&mut self, task: &Task) -> bool {
        !self.seen.insert(task.identity())
    }

    /// Hands every held task to the live schedulers.
    pub fn route(&mut self, live: &[SchedulerId]) -> Result<Vec<(TaskId, SchedulerId)>> {
        let pending: Vec<TaskId> = self.queue.iter().copied().collect();
        let (assignments, cursor) = dispatch_round_robin(&pending, live, self.cursor)?;
        self.cursor = cursor;
        self.queue.clear();
        Ok(assignments)
    }
}
