//! Shared vocabulary: identifiers, tasks, processors, schedulers, and the
//! per-interval observation and capability records exchanged between them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::simkernel::scenario::{Dist, FaultAction, FaultTarget, Scenario};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty), $label:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($label, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// Identifier of a user task, unique within a run.
    TaskId(u64),
    "T"
);
id_type!(
    /// Identifier of a backend processor.
    ProcessorId(u32),
    "P"
);
id_type!(
    /// Identifier of a scheduler (load balancer).
    SchedulerId(u32),
    "S"
);

/// A user request flowing through the cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub user_id: u32,
    pub payload_fingerprint: u64,
    /// Work units.
    pub size: f64,
    /// Currency the user offers for the job.
    pub cost: f64,
    pub arrival_time: f64,
    /// Response time the user expects, in seconds.
    pub deadline_hint: f64,
}

impl Task {
    /// Identity used for duplicate elimination.
    pub fn identity(&self) -> (u32, u64) {
        (self.user_id, self.payload_fingerprint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Up,
    Down,
}

/// A backend server modelled as a FIFO queue plus service rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Processor {
    pub id: ProcessorId,
    /// Work units processed per second.
    pub speed: f64,
    /// Work units transferred per second.
    pub bandwidth: f64,
    /// Price per second of processing.
    pub price: f64,
    /// Energy units per second while busy.
    pub energy_rate: f64,
    pub queue: VecDeque<TaskId>,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Coordinator,
    Member,
}

/// Per-interval count reported by one scheduler about one processor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub scheduler_id: SchedulerId,
    pub processor_id: ProcessorId,
    pub interval: u64,
    /// Tasks of this scheduler the processor completed during the interval.
    pub processed: u64,
    /// Tasks of this scheduler still queued at the processor at interval end.
    pub pending: u64,
}

/// One row of the coordinator's capacity estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityEstimate {
    pub processor_id: ProcessorId,
    pub interval: u64,
    /// Aggregated processed count.
    pub ap: f64,
    /// Aggregated pending count.
    pub pr: f64,
    /// Estimated requests for the next interval.
    pub er: f64,
    /// Estimated capability, `er / max(1, pr)`.
    pub ec: f64,
    /// Relative capability.
    pub rc: f64,
}

/// Protocol state of one load balancer.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    pub id: SchedulerId,
    pub role: Role,
    pub output_queue: VecDeque<TaskId>,
    pub observations: BTreeMap<(ProcessorId, u64), Observation>,
    pub capability_table: BTreeMap<ProcessorId, CapabilityEstimate>,
    pub missed_multicasts: u32,
    /// Static election tie-breaker.
    pub capacity_score: f64,
}

impl Scheduler {
    pub fn new(id: SchedulerId, capacity_score: f64) -> Self {
        Self {
            id,
            role: Role::Member,
            output_queue: VecDeque::new(),
            observations: BTreeMap::new(),
            capability_table: BTreeMap::new(),
            missed_multicasts: 0,
            capacity_score,
        }
    }

    /// Stores an observation, replacing any earlier one for the same
    /// processor and interval.
    pub fn record_observation(&mut self, obs: Observation) {
        self.observations
            .insert((obs.processor_id, obs.interval), obs);
    }

    /// Observations recorded for one interval, ordered by processor.
    pub fn observations_for(&self, interval: u64) -> impl Iterator<Item = &Observation> {
        self.observations
            .values()
            .filter(move |o| o.interval == interval)
    }

    pub fn note_multicast(&mut self) {
        self.missed_multicasts = 0;
    }
}

/// A broken invariant found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl Violation {
    fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn non_negative(v: f64) -> bool {
    v >= 0.0 && v.is_finite()
}

fn check_dist(out: &mut Vec<Violation>, subject: &str, dist: &Dist, strictly_positive: bool) {
    let ok = |v: f64| {
        if strictly_positive {
            positive(v)
        } else {
            non_negative(v)
        }
    };
    let bound = if strictly_positive { "> 0" } else { ">= 0" };
    match *dist {
        Dist::Constant { value } if !ok(value) => out.push(Violation::new(
            subject,
            format!("value must be {bound} (got {value})"),
        )),
        Dist::Uniform { low, high } if !(ok(low) && high.is_finite() && low <= high) => {
            out.push(Violation::new(
                subject,
                format!("uniform bounds must satisfy {bound} low <= high (got {low}..{high})"),
            ))
        }
        Dist::Exponential { mean } if !positive(mean) => out.push(Violation::new(
            subject,
            format!("mean must be > 0 (got {mean})"),
        )),
        _ => {}
    }
}

/// Checks every entity invariant and the referential integrity of the
/// fault schedule. An empty result means the scenario can be run.
pub fn validate_scenario(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();

    if !positive(scenario.feedback_interval) {
        out.push(Violation::new(
            "feedback_interval",
            format!("must be > 0 (got {})", scenario.feedback_interval),
        ));
    }
    if !non_negative(scenario.message_latency) {
        out.push(Violation::new(
            "message_latency",
            format!("must be >= 0 (got {})", scenario.message_latency),
        ));
    }
    if let Some(h) = scenario.horizon {
        if !positive(h) {
            out.push(Violation::new("horizon", format!("must be > 0 (got {h})")));
        }
    }

    if scenario.processors.is_empty() {
        out.push(Violation::new(
            "processors",
            "at least one processor is required",
        ));
    }
    let mut processor_ids = BTreeSet::new();
    for p in &scenario.processors {
        let subject = format!("processor {}", p.id.0);
        if !processor_ids.insert(p.id) {
            out.push(Violation::new(&subject, "duplicate processor id"));
        }
        if !positive(p.speed) {
            out.push(Violation::new(
                &subject,
                format!("speed must be > 0 (got {})", p.speed),
            ));
        }
        if !positive(p.bandwidth) {
            out.push(Violation::new(
                &subject,
                format!("bandwidth must be > 0 (got {})", p.bandwidth),
            ));
        }
        if !non_negative(p.price) {
            out.push(Violation::new(
                &subject,
                format!("price must be >= 0 (got {})", p.price),
            ));
        }
        if !non_negative(p.energy_rate) {
            out.push(Violation::new(
                &subject,
                format!("energy_rate must be >= 0 (got {})", p.energy_rate),
            ));
        }
    }

    if scenario.schedulers.is_empty() {
        out.push(Violation::new(
            "schedulers",
            "at least one scheduler is required",
        ));
    }
    let mut scheduler_ids = BTreeSet::new();
    let mut max_delay: f64 = 0.0;
    for s in &scenario.schedulers {
        let subject = format!("scheduler {}", s.id.0);
        if !scheduler_ids.insert(s.id) {
            out.push(Violation::new(&subject, "duplicate scheduler id"));
        }
        if !s.capacity_score.is_finite() {
            out.push(Violation::new(&subject, "capacity_score must be finite"));
        }
        if !non_negative(s.response_delay) {
            out.push(Violation::new(
                &subject,
                format!("response_delay must be >= 0 (got {})", s.response_delay),
            ));
        } else {
            max_delay = max_delay.max(s.response_delay);
        }
    }

    let timeout = scenario.election_timeout();
    if !positive(timeout) || timeout >= scenario.feedback_interval {
        out.push(Violation::new(
            "election_timeout",
            format!("must lie in (0, feedback_interval) (got {timeout})"),
        ));
    } else if 2.0 * (scenario.message_latency + max_delay) >= timeout {
        out.push(Violation::new(
            "election_timeout",
            format!(
                "must exceed 2 * (message_latency + max response_delay) ({} >= {timeout})",
                2.0 * (scenario.message_latency + max_delay)
            ),
        ));
    }

    let sla = &scenario.sla;
    if !non_negative(sla.cost_margin) {
        out.push(Violation::new(
            "sla",
            format!("cost_margin must be >= 0 (got {})", sla.cost_margin),
        ));
    }
    if !non_negative(sla.time_margin) {
        out.push(Violation::new(
            "sla",
            format!("time_margin must be >= 0 (got {})", sla.time_margin),
        ));
    }

    let cm = &scenario.cost_model;
    if !non_negative(cm.server_cost_per_second) || !non_negative(cm.sla_penalty) {
        out.push(Violation::new(
            "cost_model",
            "rates must be finite and >= 0",
        ));
    }

    let w = &scenario.workload;
    if w.tasks.is_empty() {
        check_dist(&mut out, "workload.size", &w.size, true);
        check_dist(&mut out, "workload.cost", &w.cost, false);
        check_dist(&mut out, "workload.deadline", &w.deadline, true);
        if w.users == 0 {
            out.push(Violation::new("workload.users", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&w.duplicate_fraction) {
            out.push(Violation::new(
                "workload.duplicate_fraction",
                format!("must lie in [0, 1] (got {})", w.duplicate_fraction),
            ));
        }
    }
    let mut task_ids = BTreeSet::new();
    for t in &w.tasks {
        let subject = format!("task {}", t.id.0);
        if !task_ids.insert(t.id) {
            out.push(Violation::new(&subject, "duplicate task id"));
        }
        if !positive(t.size) {
            out.push(Violation::new(
                &subject,
                format!("size must be > 0 (got {})", t.size),
            ));
        }
        if !positive(t.deadline_hint) {
            out.push(Violation::new(
                &subject,
                format!("deadline_hint must be > 0 (got {})", t.deadline_hint),
            ));
        }
        if !non_negative(t.cost) {
            out.push(Violation::new(
                &subject,
                format!("cost must be >= 0 (got {})", t.cost),
            ));
        }
        if !non_negative(t.arrival_time) {
            out.push(Violation::new(
                &subject,
                format!("arrival_time must be >= 0 (got {})", t.arrival_time),
            ));
        }
    }

    // Faults must name declared entities and alternate Crash/Recover per target.
    let mut faults: Vec<_> = scenario.faults.iter().enumerate().collect();
    faults.sort_by(|a, b| a.1.time.total_cmp(&b.1.time).then(a.0.cmp(&b.0)));
    let mut last_action: BTreeMap<FaultTarget, FaultAction> = BTreeMap::new();
    for (idx, f) in faults {
        let subject = format!("fault {idx}");
        let known = match f.target {
            FaultTarget::Scheduler(id) => scheduler_ids.contains(&id),
            FaultTarget::Processor(id) => processor_ids.contains(&id),
        };
        if !known {
            out.push(Violation::new(
                &subject,
                format!("targets unknown {}", f.target),
            ));
            continue;
        }
        if !non_negative(f.time) {
            out.push(Violation::new(
                &subject,
                format!("time must be >= 0 (got {})", f.time),
            ));
        }
        let previous = last_action
            .get(&f.target)
            .copied()
            .unwrap_or(FaultAction::Recover);
        if previous == f.action {
            out.push(Violation::new(
                &subject,
                format!(
                    "{:?} on {} does not alternate with the previous fault",
                    f.action, f.target
                ),
            ));
        }
        last_action.insert(f.target, f.action);
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::scenario::tests::three_by_three;

    #[test]
    fn well_formed_scenario_has_no_violations() {
        assert!(validate_scenario(&three_by_three()).is_empty());
    }

    #[test]
    fn zero_speed_names_the_processor() {
        let mut s = three_by_three();
        s.processors[1].speed = 0.0;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "processor 1");
        assert!(v[0].message.contains("speed"));
    }

    #[test]
    fn fault_on_unknown_scheduler_is_flagged() {
        let mut s = three_by_three();
        s.faults.push(crate::simkernel::scenario::FaultEvent {
            time: 5.0,
            target: FaultTarget::Scheduler(SchedulerId(9)),
            action: FaultAction::Crash,
        });
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].message.contains("S9"));
    }

    #[test]
    fn faults_must_alternate() {
        let mut s = three_by_three();
        for t in [5.0, 6.0] {
            s.faults.push(crate::simkernel::scenario::FaultEvent {
                time: t,
                target: FaultTarget::Processor(ProcessorId(0)),
                action: FaultAction::Crash,
            });
        }
        assert_eq!(validate_scenario(&s).len(), 1);
    }

    #[test]
    fn record_observation_overwrites_same_key() {
        let mut s = Scheduler::new(SchedulerId(0), 1.0);
        let obs = |processed| Observation {
            scheduler_id: SchedulerId(0),
            processor_id: ProcessorId(1),
            interval: 0,
            processed,
            pending: 0,
        };
        s.record_observation(obs(3));
        assert_eq!(s.observations.len(), 1);
        s.record_observation(obs(7));
        assert_eq!(s.observations.len(), 1);
        assert_eq!(s.observations[&(ProcessorId(1), 0)].processed, 7);
    }
}
