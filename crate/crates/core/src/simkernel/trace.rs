//! Ordered event log produced by a run, with a line-delimited JSON codec.
//!
//! Layout: one `{"meta": ...}` line, one line per executed event, and a
//! closing `{"end": ...}` line carrying the final clock and truncation flag.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::admission::Decision;
use crate::coordination::{CapacityTable, CorrectionReport, Envelope};
use crate::domain::{Observation, ProcessorId, SchedulerId, Task, TaskId};
use crate::error::{Error, Result};

use super::event::EventKind;
use super::scenario::{CostModel, FaultAction, FaultTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub feedback_interval: f64,
    pub message_latency: f64,
    pub election_timeout: f64,
    pub horizon: f64,
    pub processors: Vec<ProcessorId>,
    pub schedulers: Vec<SchedulerId>,
    pub cost_model: CostModel,
    /// Tasks in the run's universe, duplicates included.
    pub tasks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispatchTarget {
    Handler,
    Scheduler(SchedulerId),
}

/// Handler to scheduler hand-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub task: TaskId,
    pub scheduler: SchedulerId,
}

/// Scheduler to processor hand-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub task: TaskId,
    pub processor: ProcessorId,
    pub completes_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalOutcome {
    Duplicate,
    Admission(Decision),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSent {
    pub scheduler: SchedulerId,
    /// `None` when the sender knows no coordinator.
    pub to: Option<SchedulerId>,
    pub observations: Vec<Observation>,
    pub received: u64,
    pub dispatched: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissRecord {
    pub scheduler: SchedulerId,
    pub missed: u32,
    pub election_started: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum IntervalRecord {
    /// End of interval: schedulers report and check multicast liveness.
    Tick {
        interval: u64,
        reports: Vec<ReportSent>,
        misses: Vec<MissRecord>,
        /// Tasks that passed through the handler during the interval.
        handler_load: u64,
    },
    /// Coordinator aggregates the reports received for `interval`.
    Collect {
        interval: u64,
        coordinator: SchedulerId,
        reporting: Vec<SchedulerId>,
        table: CapacityTable,
        quotas: Vec<(SchedulerId, u64)>,
        /// Physical capacity of the processors up at collection time.
        cluster_capacity: f64,
        /// Absent when the interval saw no demand or no routed requests.
        correction: Option<CorrectionReport>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum TraceEvent {
    TaskArrival {
        task: Task,
        outcome: ArrivalOutcome,
        routed: Vec<Route>,
    },
    DispatchTick {
        target: DispatchTarget,
        routed: Vec<Route>,
        dispatched: Vec<Dispatch>,
    },
    TaskComplete {
        task: TaskId,
        processor: ProcessorId,
        scheduler: SchedulerId,
        arrival_time: f64,
        response_time: f64,
        deadline_hint: f64,
        cost: f64,
        violated: bool,
    },
    MessageDeliver {
        envelope: Envelope,
        delivered: bool,
    },
    FeedbackInterval(IntervalRecord),
    Fault {
        target: FaultTarget,
        action: FaultAction,
        /// False when the fault did not change the target's status.
        applied: bool,
        reclaimed: Vec<TaskId>,
    },
    ElectionTimeout {
        scheduler: SchedulerId,
        round: u64,
        candidates: Vec<SchedulerId>,
        elected: SchedulerId,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            TraceEvent::TaskArrival { .. } => EventKind::TaskArrival,
            TraceEvent::DispatchTick { .. } => EventKind::DispatchTick,
            TraceEvent::TaskComplete { .. } => EventKind::TaskComplete,
            TraceEvent::MessageDeliver { .. } => EventKind::MessageDeliver,
            TraceEvent::FeedbackInterval(_) => EventKind::FeedbackInterval,
            TraceEvent::Fault { .. } => EventKind::Fault,
            TraceEvent::ElectionTimeout { .. } => EventKind::ElectionTimeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub seq: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub time: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
    pub end: TraceEnd,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Frame {
    Meta(TraceMeta),
    End(TraceEnd),
}

impl EventTrace {
    pub fn truncated(&self) -> bool {
        self.end.truncated
    }

    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.records.iter().map(|r| &r.event)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &Frame::Meta(self.meta.clone()))?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &Frame::End(self.end))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let bad = |m: &str| Error::Parse {
            path: "<trace>".into(),
            message: m.to_owned(),
        };
        let meta = match serde_json::from_str(&lines.next().ok_or_else(|| bad("empty trace"))??)? {
            Frame::Meta(m) => m,
            Frame::End(_) => return Err(bad("trace starts with end frame")),
        };
        let mut records = Vec::new();
        let mut end = None;
        for line in lines {
            let line = line?;
            if end.is_some() {
                return Err(bad("records after end frame"));
            }
            if line.starts_with("{\"end\"") {
                match serde_json::from_str(&line)? {
                    Frame::End(e) => end = Some(e),
                    Frame::Meta(_) => return Err(bad("duplicate meta frame")),
                }
            } else {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self {
            meta,
            records,
            end: end.ok_or_else(|| bad("missing end frame"))?,
        })
    }
}
