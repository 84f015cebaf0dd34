//! Expands a workload description into the run's task universe.

use crate::domain::{Task, TaskId};

use super::rng::SimRng;
use super::scenario::{ArrivalKind, Scenario};

/// Builds every task of the run, ordered by arrival time then id.
///
/// Arrival times are drawn first, then per-task attributes, all from one
/// PRNG stream seeded with the scenario seed.
pub fn generate_tasks(scenario: &Scenario) -> Vec<Task> {
    let w = &scenario.workload;
    if !w.tasks.is_empty() {
        let mut tasks = w.tasks.clone();
        tasks.sort_by(|a, b| {
            a.arrival_time
                .total_cmp(&b.arrival_time)
                .then(a.id.cmp(&b.id))
        });
        return tasks;
    }

    let mut rng = SimRng::new(scenario.seed);
    let interval = scenario.feedback_interval;
    let total = w.per_interval * w.intervals;
    let mut arrivals = Vec::with_capacity(total);
    match w.arrival {
        ArrivalKind::Periodic => {
            for k in 0..w.intervals {
                for m in 0..w.per_interval {
                    let offset = (m as f64 + 0.5) / w.per_interval as f64;
                    arrivals.push((k as f64 + offset) * interval);
                }
            }
        }
        ArrivalKind::Poisson => {
            let mean_gap = interval / w.per_interval.max(1) as f64;
            let mut now = 0.0;
            for _ in 0..total {
                now += rng.exponential(mean_gap);
                arrivals.push(now);
            }
        }
    }

    let mut tasks: Vec<Task> = Vec::with_capacity(total);
    for (i, arrival_time) in arrivals.into_iter().enumerate() {
        let repeat = !tasks.is_empty() && rng.next_f64() < w.duplicate_fraction;
        let (user_id, payload_fingerprint) = if repeat {
            let src = rng.below(tasks.len() as u64) as usize;
            tasks[src].identity()
        } else {
            (rng.below(u64::from(w.users)) as u32, rng.next_u64())
        };
        tasks.push(Task {
            id: TaskId(i as u64),
            user_id,
            payload_fingerprint,
            size: rng.sample(&w.size),
            cost: rng.sample(&w.cost),
            arrival_time,
            deadline_hint: rng.sample(&w.deadline),
        });
    }
    tasks
}
