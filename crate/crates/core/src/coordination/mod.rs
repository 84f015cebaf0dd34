//! Cooperative-scheduler protocol: coordinator election, capacity
//! estimation from per-interval observations, failure detection, and the
//! cluster-capacity correction loop.

mod correction;
mod election;
mod estimate;

use serde::{Deserialize, Serialize};

pub use correction::{
    capacity_correction, classify_variation, standard_value, ClusterState, CorrectionReport,
    Variation,
};
pub use election::{
    detect_coordinator_failure, elect, Candidate, ElectionMessage, MISSED_MULTICAST_LIMIT,
};
pub use estimate::{estimate_capacity, split_by_weight, split_quotas, CapacityTable};

use crate::domain::{CapabilityEstimate, Observation, SchedulerId};

/// Which relative-capability formula the coordinator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RcFormula {
    /// `ER_j / sum(EC)`.
    #[default]
    Printed,
    /// `EC_j / sum(EC)`.
    Normalized,
}

impl std::str::FromStr for RcFormula {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "printed" => Ok(Self::Printed),
            "normalized" => Ok(Self::Normalized),
            other => Err(format!(
                "unknown rc formula `{other}` (expected printed|normalized)"
            )),
        }
    }
}

/// Wire messages between schedulers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Election(ElectionMessage),
    CoordinatorAnnouncement {
        coordinator: SchedulerId,
    },
    ObservationReport {
        observations: Vec<Observation>,
        /// Tasks the handler routed to the sender during the interval.
        received: u64,
        /// Tasks the sender dispatched to processors during the interval.
        dispatched: u64,
    },
    CapabilityMulticast {
        table: Vec<CapabilityEstimate>,
    },
    AdjustLoadDistribution {
        /// Tasks the recipient should issue next interval.
        quota: u64,
        total: u64,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Election(_) => "election",
            Message::CoordinatorAnnouncement { .. } => "coordinator_announcement",
            Message::ObservationReport { .. } => "observation_report",
            Message::CapabilityMulticast { .. } => "capability_multicast",
            Message::AdjustLoadDistribution { .. } => "adjust_load_distribution",
        }
    }
}

/// Every wire message carries its sender, send time and interval index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub from: SchedulerId,
    pub to: SchedulerId,
    pub send_time: f64,
    pub interval: u64,
    pub message: Message,
}
