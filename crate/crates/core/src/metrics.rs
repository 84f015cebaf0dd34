//! Reduces an event trace to per-interval capacity rows and a run summary,
//! and exports both as CSV or JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admission::Decision;
use crate::coordination::CorrectionReport;
use crate::domain::{ProcessorId, TaskId};
use crate::error::{require_positive, Error, Result};
use crate::simkernel::scenario::{CostModel, FaultAction, FaultTarget};
use crate::simkernel::trace::{ArrivalOutcome, EventTrace, IntervalRecord, TraceEvent};

pub const CSV_HEADER: &str = "interval,tasks,cd_percent,oc,uc,beta,adjustment";
const SUMMARY_MARKER: &str = "# summary";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub interval: u64,
    pub tasks: u64,
    pub cd_percent: f64,
    pub oc: f64,
    pub uc: f64,
    pub beta: f64,
    pub adjustment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResponseStats {
    pub count: u64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBenefit {
    pub provider_cost: f64,
    pub penalty_cost: f64,
    pub revenue: f64,
    pub net_benefit: f64,
    pub violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskCounts {
    pub arrived: u64,
    pub duplicates: u64,
    pub rejected_cost: u64,
    pub rejected_time: u64,
    pub admitted: u64,
    pub completed: u64,
}

macro_rules! summary {
    ($($field:ident: $ty:ty),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
        pub struct Summary {
            $(pub $field: $ty,)*
        }

        impl Summary {
            fn to_pairs(self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), self.$field.to_string()),)*]
            }

            fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
                Ok(Self {
                    $($field: {
                        let raw = pairs.get(stringify!($field)).ok_or_else(|| {
                            report_error(format!("summary lacks `{}`", stringify!($field)))
                        })?;
                        raw.parse::<$ty>().map_err(|e| {
                            report_error(format!("bad `{}`: {e}", stringify!($field)))
                        })?
                    },)*
                })
            }
        }
    };
}

summary! {
    arrived: u64,
    duplicates: u64,
    rejected_cost: u64,
    rejected_time: u64,
    admitted: u64,
    completed: u64,
    lost: u64,
    violations: u64,
    fault_percent: f64,
    completion_percent: f64,
    mean_response: f64,
    median_response: f64,
    p95_response: f64,
    provider_cost: f64,
    penalty_cost: f64,
    revenue: f64,
    net_benefit: f64,
    mean_cd_percent: f64,
    end_time: f64,
    truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<IntervalRow>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn report_error(message: String) -> Error {
    Error::Parse {
        path: "<report>".into(),
        message,
    }
}

/// Two-decimal rounding used for every exported percentage.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Extra (or surplus) capacity the correction demands, as a percentage of
/// the cluster capacity.
pub fn capacity_deviation_percent(report: &CorrectionReport, cluster_capacity: f64) -> Result<f64> {
    let cc = require_positive("cluster capacity", cluster_capacity)?;
    Ok(100.0 * report.adjustment.abs() / cc)
}

pub fn task_counts(trace: &EventTrace) -> TaskCounts {
    let mut c = TaskCounts::default();
    let mut admitted = BTreeSet::new();
    let mut completed = BTreeSet::new();
    for e in trace.events() {
        match e {
            TraceEvent::TaskArrival { task, outcome, .. } => {
                c.arrived += 1;
                match outcome {
                    ArrivalOutcome::Duplicate => c.duplicates += 1,
                    ArrivalOutcome::Admission(Decision::RejectedCost) => c.rejected_cost += 1,
                    ArrivalOutcome::Admission(Decision::RejectedTime) => c.rejected_time += 1,
                    ArrivalOutcome::Admission(Decision::Accepted) => {
                        admitted.insert(task.id);
                    }
                }
            }
            TraceEvent::TaskComplete { task, .. } => {
                completed.insert(*task);
            }
            _ => {}
        }
    }
    c.admitted = admitted.len() as u64;
    c.completed = admitted.intersection(&completed).count() as u64;
    c
}

/// Percentage of admitted tasks that never completed. Deadline misses are
/// violations, not faults.
pub fn fault_percentage(trace: &EventTrace) -> f64 {
    let c = task_counts(trace);
    if c.admitted == 0 {
        0.0
    } else {
        100.0 * (c.admitted - c.completed) as f64 / c.admitted as f64
    }
}

pub fn response_stats(trace: &EventTrace) -> ResponseStats {
    let mut rts: Vec<f64> = trace
        .events()
        .filter_map(|e| match e {
            TraceEvent::TaskComplete { response_time, .. } => Some(*response_time),
            _ => None,
        })
        .collect();
    if rts.is_empty() {
        return ResponseStats::default();
    }
    rts.sort_by(f64::total_cmp);
    let n = rts.len();
    let median = if n % 2 == 1 {
        rts[n / 2]
    } else {
        (rts[n / 2 - 1] + rts[n / 2]) / 2.0
    };
    // nearest rank
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    ResponseStats {
        count: n as u64,
        mean: rts.iter().sum::<f64>() / n as f64,
        median,
        p95: rts[rank - 1],
    }
}

/// Seconds each processor spent up between time 0 and the end of the run.
pub fn processor_uptime(trace: &EventTrace) -> BTreeMap<ProcessorId, f64> {
    let end = trace.end.time;
    let mut down_since: BTreeMap<ProcessorId, f64> = BTreeMap::new();
    let mut downtime: BTreeMap<ProcessorId, f64> = BTreeMap::new();
    for r in &trace.records {
        if let TraceEvent::Fault {
            target: FaultTarget::Processor(p),
            action,
            applied: true,
            ..
        } = r.event
        {
            match action {
                FaultAction::Crash => {
                    down_since.insert(p, r.time);
                }
                FaultAction::Recover => {
                    if let Some(t0) = down_since.remove(&p) {
                        *downtime.entry(p).or_default() += r.time - t0;
                    }
                }
            }
        }
    }
    for (p, t0) in down_since {
        *downtime.entry(p).or_default() += end - t0;
    }
    trace
        .meta
        .processors
        .iter()
        .map(|p| (*p, end - downtime.get(p).copied().unwrap_or(0.0)))
        .collect()
}

pub fn cost_benefit(trace: &EventTrace, model: &CostModel) -> CostBenefit {
    let up_seconds: f64 = processor_uptime(trace).values().sum();
    let mut revenue = 0.0;
    let mut violations = 0;
    let mut seen: BTreeSet<TaskId> = BTreeSet::new();
    for e in trace.events() {
        if let TraceEvent::TaskComplete {
            task,
            cost,
            violated,
            ..
        } = e
        {
            if seen.insert(*task) {
                revenue += cost;
                violations += u64::from(*violated);
            }
        }
    }
    let provider_cost = up_seconds * model.server_cost_per_second;
    let penalty_cost = violations as f64 * model.sla_penalty;
    CostBenefit {
        provider_cost,
        penalty_cost,
        revenue,
        net_benefit: revenue - provider_cost - penalty_cost,
        violations,
    }
}

/// One row per interval in which the coordinator ran the correction.
pub fn interval_rows(trace: &EventTrace) -> Vec<IntervalRow> {
    let mut rows: Vec<IntervalRow> = trace
        .events()
        .filter_map(|e| match e {
            TraceEvent::FeedbackInterval(IntervalRecord::Collect {
                correction: Some(c),
                ..
            }) => Some(IntervalRow {
                interval: c.interval,
                tasks: c.state.total_tasks,
                cd_percent: round2(
                    capacity_deviation_percent(c, c.state.cluster_capacity).unwrap_or(0.0),
                ),
                oc: c.over_capacity,
                uc: c.under_capacity,
                beta: c.beta,
                adjustment: c.adjustment,
            }),
            _ => None,
        })
        .collect();
    rows.sort_by_key(|r| r.interval);
    rows
}

pub fn build_report(trace: &EventTrace) -> MetricsReport {
    let rows = interval_rows(trace);
    let counts = task_counts(trace);
    let rs = response_stats(trace);
    let cb = cost_benefit(trace, &trace.meta.cost_model);
    let fault_percent = round2(fault_percentage(trace));
    let mean_cd = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.cd_percent).sum::<f64>() / rows.len() as f64
    };
    MetricsReport {
        summary: Summary {
            arrived: counts.arrived,
            duplicates: counts.duplicates,
            rejected_cost: counts.rejected_cost,
            rejected_time: counts.rejected_time,
            admitted: counts.admitted,
            completed: counts.completed,
            lost: counts.admitted - counts.completed,
            violations: cb.violations,
            fault_percent,
            completion_percent: 100.0 - fault_percent,
            mean_response: rs.mean,
            median_response: rs.median,
            p95_response: rs.p95,
            provider_cost: cb.provider_cost,
            penalty_cost: cb.penalty_cost,
            revenue: cb.revenue,
            net_benefit: cb.net_benefit,
            mean_cd_percent: round2(mean_cd),
            end_time: trace.end.time,
            truncated: trace.end.truncated,
        },
        rows,
    }
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8"));
        out.push_str(SUMMARY_MARKER);
        out.push('\n');
        out.push_str("key,value\n");
        for (k, v) in self.summary.to_pairs() {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let marker = format!("{SUMMARY_MARKER}\n");
        let (table, summary) = text
            .split_once(&marker)
            .ok_or_else(|| report_error("missing summary block".into()))?;
        if !table.starts_with(CSV_HEADER) {
            return Err(report_error("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(table.as_bytes()).deserialize() {
            rows.push(row.map_err(|e| report_error(e.to_string()))?);
        }
        let mut pairs = BTreeMap::new();
        for rec in csv::Reader::from_reader(summary.as_bytes()).records() {
            let rec = rec.map_err(|e| report_error(e.to_string()))?;
            pairs.insert(rec[0].to_owned(), rec[1].to_owned());
        }
        Ok(Self {
            rows,
            summary: Summary::from_pairs(&pairs)?,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn export(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        std::fs::write(path, self.export(format))?;
        Ok(())
    }
}
