//! Scenario document: fleet, workload, fault schedule and run parameters.
//!
//! Scenarios are TOML documents. `docs/scenario.toml` in the repository is a
//! complete annotated example.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admission::SlaPolicy;
use crate::coordination::RcFormula;
use crate::domain::{ProcessorId, SchedulerId, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    /// Length of one feedback interval in seconds.
    pub feedback_interval: f64,
    #[serde(default)]
    pub message_latency: f64,
    /// Election and report-collection window; defaults to half an interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub election_timeout: Option<f64>,
    /// Simulation cut-off; defaults to ten times the last scheduled input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub sla: SlaPolicy,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default)]
    pub cost_model: CostModel,
    pub processors: Vec<ProcessorSpec>,
    pub schedulers: Vec<SchedulerSpec>,
    pub workload: Workload,
    #[serde(default)]
    pub faults: Vec<FaultEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessorSpec {
    pub id: ProcessorId,
    pub speed: f64,
    pub bandwidth: f64,
    #[serde(default)]
    pub price: f64,
    #[serde(default)]
    pub energy_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSpec {
    pub id: SchedulerId,
    #[serde(default = "default_capacity_score")]
    pub capacity_score: f64,
    /// Time this scheduler takes to answer an election call.
    #[serde(default)]
    pub response_delay: f64,
}

fn default_capacity_score() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    /// `per_interval` arrivals evenly spaced inside every interval.
    #[default]
    Periodic,
    /// Poisson arrivals at `per_interval / feedback_interval` per second.
    Poisson,
}

/// Sampling distribution, drawn by inverse CDF from the run's PRNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase", deny_unknown_fields)]
pub enum Dist {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { mean: f64 },
}

impl Dist {
    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Constant { value } => value,
            Dist::Uniform { low, high } => 0.5 * (low + high),
            Dist::Exponential { mean } => mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    #[serde(default)]
    pub arrival: ArrivalKind,
    #[serde(default)]
    pub per_interval: usize,
    /// Number of intervals that receive arrivals.
    #[serde(default)]
    pub intervals: usize,
    #[serde(default = "default_users")]
    pub users: u32,
    /// Probability that a generated task repeats an earlier task's payload.
    #[serde(default)]
    pub duplicate_fraction: f64,
    #[serde(default = "default_size")]
    pub size: Dist,
    #[serde(default = "default_cost")]
    pub cost: Dist,
    #[serde(default = "default_deadline")]
    pub deadline: Dist,
    /// Explicit task list; when non-empty the generator fields are ignored.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<Task>,
}

fn default_users() -> u32 {
    1
}
fn default_size() -> Dist {
    Dist::Constant { value: 1.0 }
}
fn default_cost() -> Dist {
    Dist::Constant { value: 1.0 }
}
fn default_deadline() -> Dist {
    Dist::Constant { value: 1.0 }
}

impl Workload {
    pub fn empty() -> Self {
        Self {
            arrival: ArrivalKind::Periodic,
            per_interval: 0,
            intervals: 0,
            users: 1,
            duplicate_fraction: 0.0,
            size: default_size(),
            cost: default_cost(),
            deadline: default_deadline(),
            tasks: Vec::new(),
        }
    }

    pub fn mean_task_size(&self) -> f64 {
        if self.tasks.is_empty() {
            self.size.mean()
        } else {
            self.tasks.iter().map(|t| t.size).sum::<f64>() / self.tasks.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultTarget {
    Scheduler(SchedulerId),
    Processor(ProcessorId),
}

impl fmt::Display for FaultTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultTarget::Scheduler(id) => write!(f, "scheduler {id}"),
            FaultTarget::Processor(id) => write!(f, "processor {id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultAction {
    Crash,
    Recover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    pub time: f64,
    pub target: FaultTarget,
    pub action: FaultAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    #[serde(default)]
    pub rc_formula: RcFormula,
    /// Swap the increase/reduction branches of the capacity correction.
    #[serde(default)]
    pub corrected_semantics: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Cost of keeping one processor up for one second.
    #[serde(default)]
    pub server_cost_per_second: f64,
    /// Penalty charged per SLA violation.
    #[serde(default)]
    pub sla_penalty: f64,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn n_schedulers(&self) -> usize {
        self.schedulers.len()
    }

    pub fn election_timeout(&self) -> f64 {
        self.election_timeout
            .unwrap_or(self.feedback_interval / 2.0)
    }

    /// Tasks one processor can complete in one feedback interval.
    pub fn interval_capacity(&self, p: &ProcessorSpec) -> f64 {
        self.feedback_interval * p.speed / self.workload.mean_task_size()
    }

    /// Declared cluster capacity over the given processors, in tasks per
    /// interval.
    pub fn cluster_capacity<'a>(&self, up: impl IntoIterator<Item = &'a ProcessorSpec>) -> f64 {
        up.into_iter().map(|p| self.interval_capacity(p)).sum()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Three schedulers, three processors, light periodic load.
    pub(crate) fn three_by_three() -> Scenario {
        Scenario {
            seed: 1,
            feedback_interval: 10.0,
            message_latency: 0.1,
            election_timeout: None,
            horizon: None,
            sla: SlaPolicy::default(),
            flags: Flags::default(),
            cost_model: CostModel::default(),
            processors: (0..3)
                .map(|i| ProcessorSpec {
                    id: ProcessorId(i),
                    speed: 10.0 + i as f64,
                    bandwidth: 100.0,
                    price: 1.0,
                    energy_rate: 1.0,
                })
                .collect(),
            schedulers: (0..3)
                .map(|i| SchedulerSpec {
                    id: SchedulerId(i),
                    capacity_score: 1.0,
                    response_delay: 0.0,
                })
                .collect(),
            workload: Workload {
                per_interval: 5,
                intervals: 4,
                size: Dist::Constant { value: 10.0 },
                cost: Dist::Constant { value: 20.0 },
                deadline: Dist::Constant { value: 30.0 },
                ..Workload::empty()
            },
            faults: Vec::new(),
        }
    }

    #[test]
    fn toml_round_trip() {
        let s = three_by_three();
        let back = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn fault_target_parses_as_inline_table() {
        let f: FaultEvent =
            toml::from_str("time = 3.0\ntarget = { scheduler = 2 }\naction = \"crash\"").unwrap();
        assert_eq!(f.target, FaultTarget::Scheduler(SchedulerId(2)));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut text = three_by_three().to_toml_string();
        text.insert_str(0, "bogus = 1\n");
        assert!(Scenario::from_toml_str(&text).is_err());
    }
}
