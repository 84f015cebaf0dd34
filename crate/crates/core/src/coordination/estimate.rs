use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RcFormula;
use crate::domain::{CapabilityEstimate, Observation, ProcessorId, SchedulerId};

/// Coordinator output for one feedback interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityTable {
    pub interval: u64,
    pub rows: Vec<CapabilityEstimate>,
    /// Tasks to be issued cluster-wide next interval.
    pub total: f64,
    /// Fractional share of `total` per scheduler.
    pub per_scheduler: f64,
}

/// Aggregates every scheduler's observations for `interval` into one row per
/// processor.
///
/// Processed and pending counts are summed over schedulers, because each
/// scheduler sees only its own tasks. Rows come out in processor order.
pub fn estimate_capacity(
    observations: &[Observation],
    n_schedulers: usize,
    interval: u64,
    formula: RcFormula,
) -> CapacityTable {
    let mut sums: BTreeMap<ProcessorId, (u64, u64)> = BTreeMap::new();
    for o in observations.iter().filter(|o| o.interval == interval) {
        let e = sums.entry(o.processor_id).or_default();
        e.0 += o.processed;
        e.1 += o.pending;
    }

    let mut rows: Vec<CapabilityEstimate> = sums
        .into_iter()
        .map(|(processor_id, (x, y))| {
            let ap = x as f64;
            let pr = y as f64;
            let er = ap;
            CapabilityEstimate {
                processor_id,
                interval,
                ap,
                pr,
                er,
                ec: er / pr.max(1.0),
                rc: 0.0,
            }
        })
        .collect();

    let ec_sum: f64 = rows.iter().map(|r| r.ec).sum();
    for r in &mut rows {
        let numerator = match formula {
            RcFormula::Printed => r.er,
            RcFormula::Normalized => r.ec,
        };
        r.rc = if ec_sum > 0.0 {
            numerator / ec_sum
        } else {
            0.0
        };
    }

    let total: f64 = rows.iter().map(|r| r.er).sum();
    CapacityTable {
        interval,
        rows,
        total,
        per_scheduler: total / n_schedulers.max(1) as f64,
    }
}

/// Integer quotas: `floor(total / n)` each, remainder one apiece to the
/// lowest ids. Always sums to `total`.
pub fn split_quotas(total: u64, schedulers: &[SchedulerId]) -> BTreeMap<SchedulerId, u64> {
    let mut ids = schedulers.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return BTreeMap::new();
    }
    let n = ids.len() as u64;
    let (base, rem) = (total / n, total % n);
    ids.into_iter()
        .enumerate()
        .map(|(k, id)| (id, base + u64::from((k as u64) < rem)))
        .collect()
}

/// Largest-remainder apportionment of `total` by non-negative weights.
/// Remainder ties go to the lower processor id; all-zero weights give
/// all-zero shares.
pub fn split_by_weight(total: u64, weights: &[(ProcessorId, f64)]) -> BTreeMap<ProcessorId, u64> {
    let sum: f64 = weights.iter().map(|(_, w)| w.max(0.0)).sum();
    if sum <= 0.0 {
        return weights.iter().map(|(p, _)| (*p, 0)).collect();
    }
    let mut shares: Vec<(ProcessorId, u64, f64)> = weights
        .iter()
        .map(|&(p, w)| {
            let exact = total as f64 * w.max(0.0) / sum;
            let floor = exact.floor();
            (p, floor as u64, exact - floor)
        })
        .collect();
    let assigned: u64 = shares.iter().map(|s| s.1).sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        shares[b]
            .2
            .total_cmp(&shares[a].2)
            .then(shares[a].0.cmp(&shares[b].0))
    });
    for &k in order.iter().take(total.saturating_sub(assigned) as usize) {
        shares[k].1 += 1;
    }
    shares.into_iter().map(|(p, n, _)| (p, n)).collect()
}
