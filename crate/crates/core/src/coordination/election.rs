use serde::{Deserialize, Serialize};

use crate::domain::SchedulerId;

/// A scheduler's bid in an election round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectionMessage {
    pub sender: SchedulerId,
    pub send_time: f64,
    /// How long the sender took to answer the election call.
    pub responding_time: f64,
    pub capacity_score: f64,
    pub round: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: SchedulerId,
    pub responding_time: f64,
    pub capacity_score: f64,
}

impl From<&ElectionMessage> for Candidate {
    fn from(m: &ElectionMessage) -> Self {
        Self {
            id: m.sender,
            responding_time: m.responding_time,
            capacity_score: m.capacity_score,
        }
    }
}

/// Consecutive missed capability multicasts after which the coordinator is
/// presumed dead.
pub const MISSED_MULTICAST_LIMIT: u32 = 3;

/// Chooses the coordinator from the bids received before the timeout.
///
/// With no bids, `self_id` wins. Otherwise the greatest responding time
/// wins, then the highest capacity score, then the lowest id. The result
/// depends only on the candidate set, never on its order.
pub fn elect(candidates: &[Candidate], self_id: SchedulerId) -> SchedulerId {
    candidates
        .iter()
        .max_by(|a, b| {
            a.responding_time
                .total_cmp(&b.responding_time)
                .then(a.capacity_score.total_cmp(&b.capacity_score))
                .then(b.id.cmp(&a.id))
        })
        .map_or(self_id, |c| c.id)
}

pub fn detect_coordinator_failure(missed_multicasts: u32) -> bool {
    missed_multicasts >= MISSED_MULTICAST_LIMIT
}
