//! The event loop: task handler, schedulers, processors and the feedback
//! protocol, advanced one event at a time.

use std::collections::{BTreeMap, HashMap};

use crate::admission::{reclaim, sla_admit, CheapestEstimate, Decision, TaskHandler};
use crate::coordination::{
    capacity_correction, classify_variation, detect_coordinator_failure, elect, estimate_capacity,
    split_by_weight, split_quotas, Candidate, ClusterState, ElectionMessage, Envelope, Message,
};
use crate::domain::{
    validate_scenario, Observation, Processor, ProcessorId, Role, Scheduler, SchedulerId, Status,
    Task, TaskId,
};
use crate::error::{Error, Result};
use crate::placement::{place_task, processing_cost, response_time};

use super::event::EventQueue;
use super::scenario::{FaultAction, FaultEvent, FaultTarget, Scenario};
use super::service::ServiceModel;
use super::trace::{
    ArrivalOutcome, Dispatch, DispatchTarget, EventTrace, IntervalRecord, MissRecord, ReportSent,
    Route, TraceEnd, TraceEvent, TraceMeta, TraceRecord,
};
use super::workload::generate_tasks;

/// Runs `scenario` to quiescence or to its horizon.
pub fn run(scenario: &Scenario) -> Result<EventTrace> {
    Ok(Simulation::new(scenario)?.finish())
}

enum Pending {
    Arrival(usize),
    Dispatch {
        target: DispatchTarget,
        epoch: u64,
    },
    Complete {
        processor: ProcessorId,
        task: TaskId,
        epoch: u64,
    },
    Deliver(Envelope),
    Tick {
        interval: u64,
    },
    Collect {
        coordinator: SchedulerId,
        interval: u64,
        epoch: u64,
    },
    Fault(FaultEvent),
    ElectionTimeout {
        scheduler: SchedulerId,
        round: u64,
        epoch: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Pending,
    Duplicate,
    Rejected,
    Handler,
    Scheduler(SchedulerId),
    Processor(ProcessorId),
    Done,
}

struct Report {
    observations: Vec<Observation>,
    received: u64,
    dispatched: u64,
}

struct Round {
    round: u64,
    bids: BTreeMap<SchedulerId, ElectionMessage>,
}

struct SchedNode {
    core: Scheduler,
    response_delay: f64,
    up: bool,
    /// Bumped on crash so events addressed to the old incarnation are dropped.
    epoch: u64,
    coordinator: Option<SchedulerId>,
    outstanding: BTreeMap<ProcessorId, u64>,
    processed: BTreeMap<ProcessorId, u64>,
    received: u64,
    dispatched: u64,
    targets: BTreeMap<ProcessorId, u64>,
    heard_multicast: bool,
    election: Option<Round>,
    dispatch_pending: bool,
    inbox: BTreeMap<u64, BTreeMap<SchedulerId, Report>>,
}

impl SchedNode {
    fn fresh(id: SchedulerId, capacity_score: f64, response_delay: f64, epoch: u64) -> Self {
        Self {
            core: Scheduler::new(id, capacity_score),
            response_delay,
            up: true,
            epoch,
            coordinator: None,
            outstanding: BTreeMap::new(),
            processed: BTreeMap::new(),
            received: 0,
            dispatched: 0,
            targets: BTreeMap::new(),
            heard_multicast: false,
            election: None,
            dispatch_pending: false,
            inbox: BTreeMap::new(),
        }
    }
}

struct InFlight {
    owner: SchedulerId,
    owner_epoch: u64,
}

struct ProcNode {
    core: Processor,
    /// Concurrent tasks a scheduler may keep at this processor.
    slots: usize,
    epoch: u64,
    service: ServiceModel,
    inflight: HashMap<TaskId, InFlight>,
}

impl ProcNode {
    fn has_free_slot(&self) -> bool {
        self.core.status == Status::Up && self.core.queue.len() < self.slots
    }
}

/// Mutable run state. Most callers want [`run`]; the type is public so
/// faults can also be injected by hand between steps.
pub struct Simulation {
    scenario: Scenario,
    tasks: Vec<Task>,
    index: HashMap<TaskId, usize>,
    loc: Vec<Loc>,
    handler: TaskHandler,
    handler_pending: bool,
    handler_load: u64,
    loads: BTreeMap<u64, u64>,
    schedulers: BTreeMap<SchedulerId, SchedNode>,
    processors: BTreeMap<ProcessorId, ProcNode>,
    queue: EventQueue<Pending>,
    records: Vec<TraceRecord>,
    now: f64,
    horizon: f64,
    timeout: f64,
    slot_cursor: usize,
    live_tasks: u64,
    arrivals_left: usize,
    faults_left: usize,
    stop_at: Option<f64>,
    finished: Option<TraceEnd>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let violations = validate_scenario(scenario);
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        let scenario = scenario.clone();
        let tasks = generate_tasks(&scenario);
        let l = scenario.feedback_interval;
        let mean_size = scenario.workload.mean_task_size();

        let mut schedulers = BTreeMap::new();
        for s in &scenario.schedulers {
            schedulers.insert(
                s.id,
                SchedNode::fresh(s.id, s.capacity_score, s.response_delay, 0),
            );
        }
        let first = *schedulers
            .keys()
            .next()
            .expect("validated: at least one scheduler");
        for node in schedulers.values_mut() {
            node.coordinator = Some(first);
            node.core.role = if node.core.id == first {
                Role::Coordinator
            } else {
                Role::Member
            };
        }

        let mut processors = BTreeMap::new();
        for p in &scenario.processors {
            let slots = if mean_size > 0.0 {
                ((l * p.speed / mean_size).floor() as usize).max(1)
            } else {
                1
            };
            processors.insert(
                p.id,
                ProcNode {
                    core: Processor {
                        id: p.id,
                        speed: p.speed,
                        bandwidth: p.bandwidth,
                        price: p.price,
                        energy_rate: p.energy_rate,
                        queue: Default::default(),
                        status: Status::Up,
                    },
                    slots,
                    epoch: 0,
                    service: ServiceModel::default(),
                    inflight: HashMap::new(),
                },
            );
        }

        let last_arrival = tasks.iter().map(|t| t.arrival_time).fold(0.0, f64::max);
        let last_fault = scenario.faults.iter().map(|f| f.time).fold(0.0, f64::max);
        let horizon = scenario
            .horizon
            .unwrap_or_else(|| 10.0 * last_arrival.max(last_fault).max(l));

        let mut queue = EventQueue::new();
        for (i, t) in tasks.iter().enumerate() {
            queue.push(t.arrival_time, Pending::Arrival(i));
        }
        let mut faults = scenario.faults.clone();
        faults.sort_by(|a, b| a.time.total_cmp(&b.time));
        for f in &faults {
            queue.push(f.time, Pending::Fault(f.clone()));
        }
        queue.push(l, Pending::Tick { interval: 0 });

        Ok(Self {
            index: tasks.iter().enumerate().map(|(i, t)| (t.id, i)).collect(),
            loc: vec![Loc::Pending; tasks.len()],
            arrivals_left: tasks.len(),
            faults_left: faults.len(),
            timeout: scenario.election_timeout(),
            tasks,
            scenario,
            handler: TaskHandler::default(),
            handler_pending: false,
            handler_load: 0,
            loads: BTreeMap::new(),
            schedulers,
            processors,
            queue,
            records: Vec::new(),
            now: 0.0,
            horizon,
            slot_cursor: 0,
            live_tasks: 0,
            stop_at: None,
            finished: None,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Admitted tasks not yet completed.
    pub fn live_tasks(&self) -> u64 {
        self.live_tasks
    }

    /// Tasks held by the task handler, waiting for a live scheduler.
    pub fn handler_backlog(&self) -> Vec<TaskId> {
        self.handler.queue.iter().copied().collect()
    }

    /// Undispatched tasks in a scheduler's output queue.
    pub fn scheduler_backlog(&self, id: SchedulerId) -> Vec<TaskId> {
        self.schedulers
            .get(&id)
            .map(|s| s.core.output_queue.iter().copied().collect())
            .unwrap_or_default()
    }

    pub fn coordinator_of(&self, id: SchedulerId) -> Option<SchedulerId> {
        self.schedulers.get(&id).and_then(|s| s.coordinator)
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Executes the next event. Returns false once the run has ended.
    pub fn step(&mut self) -> bool {
        if self.finished.is_some() {
            return false;
        }
        let Some(next) = self.queue.peek_time() else {
            self.finished = Some(TraceEnd {
                time: self.now,
                truncated: false,
            });
            return false;
        };
        if self.stop_at.is_some_and(|s| next > s) {
            self.finished = Some(TraceEnd {
                time: self.now,
                truncated: false,
            });
            return false;
        }
        if next > self.horizon {
            self.finished = Some(TraceEnd {
                time: self.horizon,
                truncated: true,
            });
            return false;
        }
        let (time, seq, pending) = self.queue.pop().expect("peeked");
        self.now = time;
        if let Some(event) = self.handle(pending) {
            self.records.push(TraceRecord { time, seq, event });
        }
        true
    }

    /// Runs events up to and including time `t`.
    pub fn run_until(&mut self, t: f64) {
        while self.queue.peek_time().is_some_and(|n| n <= t) && self.step() {}
    }

    /// Applies a fault at the current clock, outside the schedule.
    pub fn inject_fault(&mut self, target: FaultTarget, action: FaultAction) -> TraceEvent {
        let event = self.apply_fault(target, action);
        let seq = self.queue.reserve_seq();
        self.records.push(TraceRecord {
            time: self.now,
            seq,
            event: event.clone(),
        });
        event
    }

    pub fn finish(mut self) -> EventTrace {
        while self.step() {}
        let end = self.finished.expect("loop ends with a verdict");
        EventTrace {
            meta: TraceMeta {
                seed: self.scenario.seed,
                feedback_interval: self.scenario.feedback_interval,
                message_latency: self.scenario.message_latency,
                election_timeout: self.timeout,
                horizon: self.horizon,
                processors: self.processors.keys().copied().collect(),
                schedulers: self.schedulers.keys().copied().collect(),
                cost_model: self.scenario.cost_model,
                tasks: self.tasks.len(),
            },
            records: self.records,
            end,
        }
    }

    fn handle(&mut self, pending: Pending) -> Option<TraceEvent> {
        match pending {
            Pending::Arrival(i) => Some(self.on_arrival(i)),
            Pending::Dispatch { target, epoch } => self.on_dispatch(target, epoch),
            Pending::Complete {
                processor,
                task,
                epoch,
            } => self.on_complete(processor, task, epoch),
            Pending::Deliver(envelope) => Some(self.on_deliver(envelope)),
            Pending::Tick { interval } => Some(self.on_tick(interval)),
            Pending::Collect {
                coordinator,
                interval,
                epoch,
            } => self.on_collect(coordinator, interval, epoch),
            Pending::Fault(f) => {
                self.faults_left -= 1;
                Some(self.apply_fault(f.target, f.action))
            }
            Pending::ElectionTimeout {
                scheduler,
                round,
                epoch,
            } => self.on_election_timeout(scheduler, round, epoch),
        }
    }

    fn live_schedulers(&self) -> Vec<SchedulerId> {
        self.schedulers
            .values()
            .filter(|s| s.up)
            .map(|s| s.core.id)
            .collect()
    }

    fn task(&self, id: TaskId) -> &Task {
        &self.tasks[self.index[&id]]
    }

    fn set_loc(&mut self, id: TaskId, loc: Loc) {
        let i = self.index[&id];
        self.loc[i] = loc;
    }

    fn send(
        &mut self,
        at: f64,
        from: SchedulerId,
        to: SchedulerId,
        interval: u64,
        message: Message,
    ) {
        let envelope = Envelope {
            from,
            to,
            send_time: at,
            interval,
            message,
        };
        self.queue.push(
            at + self.scenario.message_latency,
            Pending::Deliver(envelope),
        );
    }

    fn request_handler_dispatch(&mut self) {
        if !self.handler_pending && !self.handler.queue.is_empty() {
            self.handler_pending = true;
            self.queue.push(
                self.now,
                Pending::Dispatch {
                    target: DispatchTarget::Handler,
                    epoch: 0,
                },
            );
        }
    }

    fn request_dispatch(&mut self, id: SchedulerId) {
        let node = self.schedulers.get_mut(&id).expect("known scheduler");
        if node.up && !node.dispatch_pending && !node.core.output_queue.is_empty() {
            node.dispatch_pending = true;
            let epoch = node.epoch;
            self.queue.push(
                self.now,
                Pending::Dispatch {
                    target: DispatchTarget::Scheduler(id),
                    epoch,
                },
            );
        }
    }

    /// Hands the handler's backlog to the live schedulers.
    fn route_handler(&mut self) -> Vec<Route> {
        let live = self.live_schedulers();
        if live.is_empty() || self.handler.queue.is_empty() {
            return Vec::new();
        }
        let assignments = self.handler.route(&live).expect("live set is non-empty");
        let mut routes = Vec::with_capacity(assignments.len());
        for (task, scheduler) in assignments {
            let node = self.schedulers.get_mut(&scheduler).expect("live scheduler");
            node.core.output_queue.push_back(task);
            node.received += 1;
            self.set_loc(task, Loc::Scheduler(scheduler));
            routes.push(Route { task, scheduler });
        }
        for s in live {
            self.request_dispatch(s);
        }
        routes
    }

    fn cheapest_estimate(&self, task: &Task) -> Option<CheapestEstimate> {
        self.processors
            .values()
            .filter(|p| p.core.status == Status::Up)
            .filter_map(|p| {
                let c = processing_cost(task.size, p.core.speed, p.core.price).ok()?;
                let rt = response_time(task.size, p.core.bandwidth, p.core.speed).ok()?;
                Some((c, rt, p.core.id))
            })
            .min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            })
            .map(|(price_cost, response_time, _)| CheapestEstimate {
                price_cost,
                response_time,
            })
    }

    fn on_arrival(&mut self, i: usize) -> TraceEvent {
        self.arrivals_left -= 1;
        let task = self.tasks[i].clone();
        let (outcome, routed) = if self.handler.is_duplicate(&task) {
            self.loc[i] = Loc::Duplicate;
            (ArrivalOutcome::Duplicate, Vec::new())
        } else {
            let decision = sla_admit(&task, self.cheapest_estimate(&task), &self.scenario.sla);
            if decision == Decision::Accepted {
                self.loc[i] = Loc::Handler;
                self.live_tasks += 1;
                self.handler_load += 1;
                self.handler.queue.push_back(task.id);
                (ArrivalOutcome::Admission(decision), self.route_handler())
            } else {
                self.loc[i] = Loc::Rejected;
                (ArrivalOutcome::Admission(decision), Vec::new())
            }
        };
        TraceEvent::TaskArrival {
            task,
            outcome,
            routed,
        }
    }

    fn on_dispatch(&mut self, target: DispatchTarget, epoch: u64) -> Option<TraceEvent> {
        match target {
            DispatchTarget::Handler => {
                self.handler_pending = false;
                let routed = self.route_handler();
                Some(TraceEvent::DispatchTick {
                    target,
                    routed,
                    dispatched: Vec::new(),
                })
            }
            DispatchTarget::Scheduler(id) => {
                let node = self.schedulers.get_mut(&id).expect("known scheduler");
                if !node.up || node.epoch != epoch {
                    return None;
                }
                node.dispatch_pending = false;
                let dispatched = self.dispatch_from(id);
                Some(TraceEvent::DispatchTick {
                    target,
                    routed: Vec::new(),
                    dispatched,
                })
            }
        }
    }

    /// Moves tasks from a scheduler's output queue onto processors with a
    /// free slot. Processors still owed part of this scheduler's quota are
    /// preferred; the rank-sum placement picks within the preferred tier.
    fn dispatch_from(&mut self, id: SchedulerId) -> Vec<Dispatch> {
        let mut out = Vec::new();
        loop {
            let node = &self.schedulers[&id];
            let Some(&task_id) = node.core.output_queue.front() else {
                break;
            };
            let free: Vec<ProcessorId> = self
                .processors
                .values()
                .filter(|p| p.has_free_slot())
                .map(|p| p.core.id)
                .collect();
            if free.is_empty() {
                break;
            }
            let owed: Vec<ProcessorId> = free
                .iter()
                .copied()
                .filter(|p| node.targets.get(p).is_some_and(|&n| n > 0))
                .collect();
            let tier = if owed.is_empty() { free } else { owed };
            let task = self.task(task_id);
            let Ok(pid) = place_task(task, tier.iter().map(|p| &self.processors[p].core)) else {
                break;
            };
            let (size, epoch) = (task.size, self.processors[&pid].epoch);

            let node = self.schedulers.get_mut(&id).expect("known scheduler");
            node.core.output_queue.pop_front();
            node.dispatched += 1;
            *node.outstanding.entry(pid).or_default() += 1;
            if let Some(n) = node.targets.get_mut(&pid) {
                *n = n.saturating_sub(1);
            }
            let owner_epoch = node.epoch;

            let proc = self.processors.get_mut(&pid).expect("known processor");
            proc.core.queue.push_back(task_id);
            proc.inflight.insert(
                task_id,
                InFlight {
                    owner: id,
                    owner_epoch,
                },
            );
            let completes_at =
                proc.service
                    .admit(size, proc.core.bandwidth, proc.core.speed, self.now);
            self.queue.push(
                completes_at,
                Pending::Complete {
                    processor: pid,
                    task: task_id,
                    epoch,
                },
            );
            self.set_loc(task_id, Loc::Processor(pid));
            out.push(Dispatch {
                task: task_id,
                processor: pid,
                completes_at,
            });
        }
        out
    }

    fn on_complete(&mut self, pid: ProcessorId, task_id: TaskId, epoch: u64) -> Option<TraceEvent> {
        let proc = self.processors.get_mut(&pid).expect("known processor");
        if proc.epoch != epoch || proc.core.status != Status::Up {
            return None;
        }
        let inflight = proc.inflight.remove(&task_id)?;
        if let Some(pos) = proc.core.queue.iter().position(|t| *t == task_id) {
            proc.core.queue.remove(pos);
        }
        let owner = self
            .schedulers
            .get_mut(&inflight.owner)
            .expect("known scheduler");
        if owner.up && owner.epoch == inflight.owner_epoch {
            if let Some(n) = owner.outstanding.get_mut(&pid) {
                *n = n.saturating_sub(1);
            }
            *owner.processed.entry(pid).or_default() += 1;
        }
        self.set_loc(task_id, Loc::Done);
        self.live_tasks -= 1;
        let task = self.task(task_id).clone();
        let response_time = self.now - task.arrival_time;
        self.offer_free_slot();
        Some(TraceEvent::TaskComplete {
            task: task_id,
            processor: pid,
            scheduler: inflight.owner,
            arrival_time: task.arrival_time,
            response_time,
            deadline_hint: task.deadline_hint,
            cost: task.cost,
            violated: response_time > task.deadline_hint,
        })
    }

    /// A slot opened: wake the next scheduler in rotation that has work.
    fn offer_free_slot(&mut self) {
        let ids: Vec<SchedulerId> = self.schedulers.keys().copied().collect();
        let n = ids.len();
        for k in 0..n {
            let idx = (self.slot_cursor + k) % n;
            let node = &self.schedulers[&ids[idx]];
            if node.up && !node.core.output_queue.is_empty() {
                self.slot_cursor = (idx + 1) % n;
                self.request_dispatch(ids[idx]);
                return;
            }
        }
    }

    fn on_tick(&mut self, interval: u64) -> TraceEvent {
        let mut reports = Vec::new();
        let mut misses = Vec::new();
        let mut elections = Vec::new();
        let proc_up: BTreeMap<ProcessorId, bool> = self
            .processors
            .iter()
            .map(|(id, p)| (*id, p.core.status == Status::Up))
            .collect();

        for id in self.live_schedulers() {
            let node = self.schedulers.get_mut(&id).expect("live scheduler");
            let observations: Vec<Observation> = proc_up
                .iter()
                .filter_map(|(&pid, &up)| {
                    let processed = node.processed.get(&pid).copied().unwrap_or(0);
                    let pending = node.outstanding.get(&pid).copied().unwrap_or(0);
                    (up || processed > 0 || pending > 0).then_some(Observation {
                        scheduler_id: id,
                        processor_id: pid,
                        interval,
                        processed,
                        pending,
                    })
                })
                .collect();
            for o in &observations {
                node.core.record_observation(o.clone());
            }
            let report = Report {
                observations: observations.clone(),
                received: node.received,
                dispatched: node.dispatched,
            };
            let to = if node.core.role == Role::Coordinator {
                Some(id)
            } else {
                node.coordinator
            };
            reports.push(ReportSent {
                scheduler: id,
                to,
                observations: report.observations.clone(),
                received: report.received,
                dispatched: report.dispatched,
            });

            if node.core.role == Role::Member
                && interval > 0
                && node.election.is_none()
                && !node.heard_multicast
            {
                node.core.missed_multicasts += 1;
                let started = detect_coordinator_failure(node.core.missed_multicasts);
                misses.push(MissRecord {
                    scheduler: id,
                    missed: node.core.missed_multicasts,
                    election_started: started,
                });
                if started {
                    elections.push(id);
                }
            }
            node.heard_multicast = false;
            node.processed.clear();
            node.received = 0;
            node.dispatched = 0;

            match to {
                Some(c) if c == id => {
                    node.inbox.entry(interval).or_default().insert(id, report);
                }
                Some(c) => {
                    let now = self.now;
                    self.send(
                        now,
                        id,
                        c,
                        interval,
                        Message::ObservationReport {
                            observations: report.observations,
                            received: report.received,
                            dispatched: report.dispatched,
                        },
                    );
                }
                None => {}
            }
        }

        for id in elections {
            self.begin_round(id, interval);
        }

        let coordinators: Vec<(SchedulerId, u64)> = self
            .schedulers
            .values()
            .filter(|s| s.up && s.core.role == Role::Coordinator)
            .map(|s| (s.core.id, s.epoch))
            .collect();
        for (coordinator, epoch) in coordinators {
            self.queue.push(
                self.now + self.timeout,
                Pending::Collect {
                    coordinator,
                    interval,
                    epoch,
                },
            );
        }

        let handler_load = self.handler_load;
        self.loads.insert(interval, handler_load);
        self.handler_load = self.handler.queue.len() as u64;
        self.queue.push(
            (interval + 2) as f64 * self.scenario.feedback_interval,
            Pending::Tick {
                interval: interval + 1,
            },
        );

        if self.stop_at.is_none()
            && self.arrivals_left == 0
            && self.faults_left == 0
            && self.live_tasks == 0
        {
            // Let the last interval's collection run, then stop.
            self.stop_at = Some(self.now + self.timeout);
        }

        TraceEvent::FeedbackInterval(IntervalRecord::Tick {
            interval,
            reports,
            misses,
            handler_load,
        })
    }

    fn on_collect(&mut self, id: SchedulerId, interval: u64, epoch: u64) -> Option<TraceEvent> {
        let formula = self.scenario.flags.rc_formula;
        let corrected = self.scenario.flags.corrected_semantics;
        let cluster_capacity = self.cluster_capacity();
        let total_tasks = self.loads.get(&interval).copied().unwrap_or(0);
        let proc_up: Vec<ProcessorId> = self
            .processors
            .values()
            .filter(|p| p.core.status == Status::Up)
            .map(|p| p.core.id)
            .collect();

        let node = self.schedulers.get_mut(&id).expect("known scheduler");
        if !node.up || node.epoch != epoch || node.core.role != Role::Coordinator {
            return None;
        }
        let reports = node.inbox.remove(&interval).unwrap_or_default();
        node.inbox.retain(|k, _| *k > interval);

        let reporting: Vec<SchedulerId> = reports.keys().copied().collect();
        let observations: Vec<Observation> = reports
            .values()
            .flat_map(|r| r.observations.iter().cloned())
            .collect();
        let table = estimate_capacity(&observations, reporting.len(), interval, formula);
        let total = table.total.round() as u64;
        let quotas = split_quotas(total, &reporting);

        let total_requests: u64 = reports.values().map(|r| r.received).sum();
        let correction = if total_tasks > 0 && total_requests > 0 && cluster_capacity > 0.0 {
            let state = ClusterState {
                cluster_capacity,
                total_tasks,
                total_requests,
            };
            let beta = cluster_capacity / total_tasks as f64;
            let mut variations = Vec::new();
            for r in reports.values().filter(|r| r.received > 0) {
                // Per-request throughput of this scheduler, as a multiple of beta.
                let measured = beta * r.dispatched as f64 / r.received as f64;
                let v = classify_variation(measured, beta).expect("beta > 0");
                variations.extend(std::iter::repeat_n(v, r.received as usize));
            }
            Some(
                capacity_correction(interval, &state, &variations, corrected)
                    .expect("checked inputs"),
            )
        } else {
            None
        };

        node.core.capability_table = table
            .rows
            .iter()
            .map(|r| (r.processor_id, r.clone()))
            .collect();
        node.core.note_multicast();
        let own_quota = quotas.get(&id).copied().unwrap_or(0);
        node.targets = quota_targets(&node.core, own_quota, &proc_up);

        let now = self.now;
        let others: Vec<SchedulerId> = self
            .schedulers
            .keys()
            .copied()
            .filter(|s| *s != id)
            .collect();
        for to in others {
            self.send(
                now,
                id,
                to,
                interval,
                Message::CapabilityMulticast {
                    table: table.rows.clone(),
                },
            );
            self.send(
                now,
                id,
                to,
                interval,
                Message::AdjustLoadDistribution {
                    quota: quotas.get(&to).copied().unwrap_or(0),
                    total,
                },
            );
        }

        Some(TraceEvent::FeedbackInterval(IntervalRecord::Collect {
            interval,
            coordinator: id,
            reporting,
            table,
            quotas: quotas.into_iter().collect(),
            cluster_capacity,
            correction,
        }))
    }

    fn cluster_capacity(&self) -> f64 {
        let up: Vec<_> = self
            .scenario
            .processors
            .iter()
            .filter(|p| self.processors[&p.id].core.status == Status::Up)
            .collect();
        self.scenario.cluster_capacity(up)
    }

    fn on_deliver(&mut self, envelope: Envelope) -> TraceEvent {
        let proc_up: Vec<ProcessorId> = self
            .processors
            .values()
            .filter(|p| p.core.status == Status::Up)
            .map(|p| p.core.id)
            .collect();
        let to = envelope.to;
        let delivered = self.schedulers.get(&to).is_some_and(|s| s.up);
        if delivered {
            match &envelope.message {
                Message::Election(bid) => self.on_bid(to, *bid),
                Message::CoordinatorAnnouncement { coordinator } => {
                    let node = self.schedulers.get_mut(&to).expect("known scheduler");
                    node.coordinator = Some(*coordinator);
                    node.core.role = if *coordinator == to {
                        Role::Coordinator
                    } else {
                        Role::Member
                    };
                    node.core.missed_multicasts = 0;
                    node.heard_multicast = true;
                    node.election = None;
                }
                Message::ObservationReport {
                    observations,
                    received,
                    dispatched,
                } => {
                    let node = self.schedulers.get_mut(&to).expect("known scheduler");
                    node.inbox.entry(envelope.interval).or_default().insert(
                        envelope.from,
                        Report {
                            observations: observations.clone(),
                            received: *received,
                            dispatched: *dispatched,
                        },
                    );
                }
                Message::CapabilityMulticast { table } => {
                    let node = self.schedulers.get_mut(&to).expect("known scheduler");
                    node.core.capability_table =
                        table.iter().map(|r| (r.processor_id, r.clone())).collect();
                    node.core.note_multicast();
                    node.heard_multicast = true;
                    if node.core.role != Role::Coordinator {
                        node.coordinator = Some(envelope.from);
                    }
                }
                Message::AdjustLoadDistribution { quota, .. } => {
                    let node = self.schedulers.get_mut(&to).expect("known scheduler");
                    node.targets = quota_targets(&node.core, *quota, &proc_up);
                }
            }
        }
        TraceEvent::MessageDeliver {
            envelope,
            delivered,
        }
    }

    /// Joins (or opens) an election round and multicasts this scheduler's bid.
    fn begin_round(&mut self, id: SchedulerId, round: u64) {
        let now = self.now;
        let node = self.schedulers.get_mut(&id).expect("known scheduler");
        let delay = node.response_delay;
        let bid = ElectionMessage {
            sender: id,
            send_time: now + delay,
            responding_time: delay,
            capacity_score: node.core.capacity_score,
            round,
        };
        let mut bids = BTreeMap::new();
        bids.insert(id, bid);
        node.election = Some(Round { round, bids });
        let epoch = node.epoch;
        let others: Vec<SchedulerId> = self
            .schedulers
            .keys()
            .copied()
            .filter(|s| *s != id)
            .collect();
        for to in others {
            self.send(now + delay, id, to, round, Message::Election(bid));
        }
        self.queue.push(
            now + self.timeout,
            Pending::ElectionTimeout {
                scheduler: id,
                round,
                epoch,
            },
        );
    }

    fn on_bid(&mut self, id: SchedulerId, bid: ElectionMessage) {
        if self.schedulers[&id].election.is_none() {
            self.begin_round(id, bid.round);
        }
        let node = self.schedulers.get_mut(&id).expect("known scheduler");
        if let Some(r) = node.election.as_mut() {
            r.bids.insert(bid.sender, bid);
        }
    }

    fn on_election_timeout(
        &mut self,
        id: SchedulerId,
        round: u64,
        epoch: u64,
    ) -> Option<TraceEvent> {
        let node = self.schedulers.get_mut(&id).expect("known scheduler");
        if !node.up
            || node.epoch != epoch
            || node.election.as_ref().is_none_or(|r| r.round != round)
        {
            return None;
        }
        let bids = node.election.take().expect("checked").bids;
        let candidates: Vec<Candidate> = bids.values().map(Candidate::from).collect();
        let elected = elect(&candidates, id);
        node.coordinator = Some(elected);
        node.core.role = if elected == id {
            Role::Coordinator
        } else {
            Role::Member
        };
        node.core.missed_multicasts = 0;
        node.heard_multicast = true;
        if elected == id {
            let now = self.now;
            let others: Vec<SchedulerId> = self
                .schedulers
                .keys()
                .copied()
                .filter(|s| *s != id)
                .collect();
            for to in others {
                self.send(
                    now,
                    id,
                    to,
                    round,
                    Message::CoordinatorAnnouncement { coordinator: id },
                );
            }
        }
        Some(TraceEvent::ElectionTimeout {
            scheduler: id,
            round,
            candidates: bids.keys().copied().collect(),
            elected,
        })
    }

    fn apply_fault(&mut self, target: FaultTarget, action: FaultAction) -> TraceEvent {
        let mut reclaimed = Vec::new();
        let applied = match (target, action) {
            (FaultTarget::Scheduler(id), FaultAction::Crash) => {
                let node = self.schedulers.get_mut(&id).expect("validated target");
                if node.up {
                    reclaimed = reclaim(id, &mut node.core.output_queue);
                    let epoch = node.epoch + 1;
                    *node =
                        SchedNode::fresh(id, node.core.capacity_score, node.response_delay, epoch);
                    node.up = false;
                    true
                } else {
                    false
                }
            }
            (FaultTarget::Scheduler(id), FaultAction::Recover) => {
                let node = self.schedulers.get_mut(&id).expect("validated target");
                if node.up {
                    false
                } else {
                    node.up = true;
                    true
                }
            }
            (FaultTarget::Processor(id), FaultAction::Crash) => {
                let proc = self.processors.get_mut(&id).expect("validated target");
                if proc.core.status == Status::Up {
                    proc.core.status = Status::Down;
                    proc.epoch += 1;
                    reclaimed = proc.core.queue.drain(..).collect();
                    for t in &reclaimed {
                        let f = proc.inflight.remove(t).expect("queued tasks are in flight");
                        let owner = self.schedulers.get_mut(&f.owner).expect("known scheduler");
                        if owner.epoch == f.owner_epoch {
                            if let Some(n) = owner.outstanding.get_mut(&id) {
                                *n = n.saturating_sub(1);
                            }
                        }
                    }
                    true
                } else {
                    false
                }
            }
            (FaultTarget::Processor(id), FaultAction::Recover) => {
                let now = self.now;
                let proc = self.processors.get_mut(&id).expect("validated target");
                if proc.core.status == Status::Down {
                    proc.core.status = Status::Up;
                    proc.service = ServiceModel { free_at: now };
                    true
                } else {
                    false
                }
            }
        };
        for &t in &reclaimed {
            self.set_loc(t, Loc::Handler);
            self.handler.queue.push_back(t);
        }
        self.handler_load += reclaimed.len() as u64;
        if applied {
            self.request_handler_dispatch();
            let ids: Vec<SchedulerId> = self.schedulers.keys().copied().collect();
            for s in ids {
                self.request_dispatch(s);
            }
        }
        TraceEvent::Fault {
            target,
            action,
            applied,
            reclaimed,
        }
    }
}

/// Splits a scheduler's quota over the up processors by relative capability.
fn quota_targets(core: &Scheduler, quota: u64, up: &[ProcessorId]) -> BTreeMap<ProcessorId, u64> {
    let weights: Vec<(ProcessorId, f64)> = core
        .capability_table
        .values()
        .filter(|r| up.contains(&r.processor_id))
        .map(|r| (r.processor_id, r.rc))
        .collect();
    split_by_weight(quota, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::scenario::tests::three_by_three;
    use crate::simkernel::scenario::Workload;

    #[test]
    fn every_admitted_task_completes_without_faults() {
        let trace = run(&three_by_three()).unwrap();
        assert!(!trace.truncated());
        let completes = trace
            .events()
            .filter(|e| matches!(e, TraceEvent::TaskComplete { .. }))
            .count();
        assert_eq!(completes, 20);
    }

    #[test]
    fn invalid_scenario_is_refused() {
        let mut s = three_by_three();
        s.processors[1].speed = 0.0;
        match run(&s) {
            Err(Error::Invalid(v)) => assert_eq!(v[0].subject, "processor 1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crashing_sole_scheduler_returns_queue_to_handler() {
        let mut s = three_by_three();
        s.schedulers.truncate(1);
        s.processors.truncate(1);
        s.workload = Workload {
            per_interval: 30,
            intervals: 1,
            ..s.workload.clone()
        };
        let mut sim = Simulation::new(&s).unwrap();
        sim.run_until(5.0);
        let queued = sim.scheduler_backlog(SchedulerId(0));
        assert!(!queued.is_empty());
        let ev = sim.inject_fault(FaultTarget::Scheduler(SchedulerId(0)), FaultAction::Crash);
        match ev {
            TraceEvent::Fault {
                reclaimed, applied, ..
            } => {
                assert!(applied);
                assert_eq!(reclaimed, queued);
            }
            e => panic!("{e:?}"),
        }
        assert_eq!(sim.handler_backlog(), queued);
        // nothing can be routed while the only scheduler is down
        sim.run_until(8.0);
        assert!(sim.handler_backlog().len() >= queued.len());
        let again = sim.inject_fault(FaultTarget::Scheduler(SchedulerId(0)), FaultAction::Crash);
        assert!(matches!(again, TraceEvent::Fault { applied: false, .. }));
    }
}
