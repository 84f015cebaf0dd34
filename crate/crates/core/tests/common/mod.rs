#![allow(dead_code)]

use std::collections::BTreeMap;

use synclb::admission::{Decision, SlaPolicy};
use synclb::domain::{ProcessorId, SchedulerId, TaskId};
use synclb::simkernel::scenario::{CostModel, Dist, Flags, ProcessorSpec, SchedulerSpec, Workload};
use synclb::simkernel::trace::{ArrivalOutcome, DispatchTarget, EventTrace, TraceEvent};
use synclb::simkernel::{FaultAction, FaultTarget, Scenario};

/// Cluster with one processor per entry of `speeds`, bandwidth 100,
/// unit price and energy, and `n_schedulers` identical schedulers.
/// Tasks are 10 work units, offer 20, expect 30 seconds.
pub fn cluster(
    speeds: &[f64],
    n_schedulers: u32,
    per_interval: usize,
    intervals: usize,
) -> Scenario {
    Scenario {
        seed: 7,
        feedback_interval: 10.0,
        message_latency: 0.1,
        election_timeout: None,
        horizon: None,
        sla: SlaPolicy::default(),
        flags: Flags::default(),
        cost_model: CostModel::default(),
        processors: speeds
            .iter()
            .enumerate()
            .map(|(i, &speed)| ProcessorSpec {
                id: ProcessorId(i as u32),
                speed,
                bandwidth: 100.0,
                price: 1.0,
                energy_rate: 1.0,
            })
            .collect(),
        schedulers: (0..n_schedulers)
            .map(|i| SchedulerSpec {
                id: SchedulerId(i),
                capacity_score: 1.0,
                response_delay: 0.0,
            })
            .collect(),
        workload: Workload {
            per_interval,
            intervals,
            size: Dist::Constant { value: 10.0 },
            cost: Dist::Constant { value: 20.0 },
            deadline: Dist::Constant { value: 30.0 },
            ..Workload::empty()
        },
        faults: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Where {
    Handler,
    Scheduler(SchedulerId),
    Processor(ProcessorId),
    Done,
}

#[derive(Debug, Default)]
pub struct Audit {
    pub admitted: usize,
    pub completed: usize,
    pub stranded: Vec<TaskId>,
    pub location: BTreeMap<TaskId, Where>,
}

/// Replays the trace's hand-offs and checks that every admitted task moves
/// along legal edges only, ending in exactly one place.
pub fn audit(trace: &EventTrace) -> Audit {
    let mut loc: BTreeMap<TaskId, Where> = BTreeMap::new();
    let mut admitted = 0;
    let mut last_time = f64::NEG_INFINITY;
    let mut last_seq = None;
    let mv =
        |loc: &mut BTreeMap<TaskId, Where>, t: TaskId, from: &dyn Fn(Where) -> bool, to: Where| {
            let cur = *loc
                .get(&t)
                .unwrap_or_else(|| panic!("{t} moved before admission"));
            assert!(from(cur), "{t}: illegal move {cur:?} -> {to:?}");
            loc.insert(t, to);
        };
    for r in &trace.records {
        assert!(r.time >= last_time, "records out of time order");
        if r.time == last_time {
            assert!(
                Some(r.seq) > last_seq,
                "sequence not monotone at equal time"
            );
        }
        last_time = r.time;
        last_seq = Some(r.seq);
        match &r.event {
            TraceEvent::TaskArrival {
                task,
                outcome,
                routed,
            } => {
                if *outcome == ArrivalOutcome::Admission(Decision::Accepted) {
                    assert!(
                        loc.insert(task.id, Where::Handler).is_none(),
                        "{} admitted twice",
                        task.id
                    );
                    admitted += 1;
                }
                for route in routed {
                    mv(
                        &mut loc,
                        route.task,
                        &|w| w == Where::Handler,
                        Where::Scheduler(route.scheduler),
                    );
                }
            }
            TraceEvent::DispatchTick {
                target,
                routed,
                dispatched,
            } => {
                for route in routed {
                    assert_eq!(*target, DispatchTarget::Handler);
                    mv(
                        &mut loc,
                        route.task,
                        &|w| w == Where::Handler,
                        Where::Scheduler(route.scheduler),
                    );
                }
                for d in dispatched {
                    let DispatchTarget::Scheduler(s) = *target else {
                        panic!("handler dispatched to a processor");
                    };
                    mv(
                        &mut loc,
                        d.task,
                        &|w| w == Where::Scheduler(s),
                        Where::Processor(d.processor),
                    );
                }
            }
            TraceEvent::TaskComplete {
                task, processor, ..
            } => {
                let p = *processor;
                mv(&mut loc, *task, &|w| w == Where::Processor(p), Where::Done);
            }
            TraceEvent::Fault {
                target, reclaimed, ..
            } => {
                for t in reclaimed {
                    let from = match *target {
                        FaultTarget::Scheduler(s) => Where::Scheduler(s),
                        FaultTarget::Processor(p) => Where::Processor(p),
                    };
                    mv(&mut loc, *t, &|w| w == from, Where::Handler);
                }
            }
            TraceEvent::MessageDeliver { envelope, .. } => {
                assert!(
                    r.time + 1e-12 >= envelope.send_time + trace.meta.message_latency,
                    "message delivered before send time + latency"
                );
            }
            _ => {}
        }
    }
    let completed = loc.values().filter(|w| **w == Where::Done).count();
    let stranded = loc
        .iter()
        .filter(|(_, w)| **w != Where::Done)
        .map(|(t, _)| *t)
        .collect();
    Audit {
        admitted,
        completed,
        stranded,
        location: loc,
    }
}

pub fn crash(time: f64, target: FaultTarget) -> synclb::simkernel::FaultEvent {
    synclb::simkernel::FaultEvent {
        time,
        target,
        action: FaultAction::Crash,
    }
}

pub fn recover(time: f64, target: FaultTarget) -> synclb::simkernel::FaultEvent {
    synclb::simkernel::FaultEvent {
        time,
        target,
        action: FaultAction::Recover,
    }
}
