//! Per-(task, processor) objectives and rank-sum placement.
//!
//! Each task is scored on three criteria over the live processors: response
//! time (lower is better), energy (lower is better) and profit (higher is
//! better). Criteria are ranked with standard competition ranking and the
//! processor with the smallest rank sum wins. Rank-sum ties go to the lower
//! response time, then to the lower processor id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{Processor, ProcessorId, Task, TaskId};
use crate::error::{require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTriple {
    pub response_time: f64,
    pub energy: f64,
    pub profit: f64,
}

impl ObjectiveTriple {
    pub const fn new(response_time: f64, energy: f64, profit: f64) -> Self {
        Self {
            response_time,
            energy,
            profit,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlacementResult {
    pub assignment: BTreeMap<TaskId, ProcessorId>,
    pub rank_sums: BTreeMap<(TaskId, ProcessorId), u32>,
}

/// Transmission time plus processing time.
pub fn response_time(size: f64, bandwidth: f64, speed: f64) -> Result<f64> {
    let bw = require_positive("bandwidth", bandwidth)?;
    let ps = require_positive("speed", speed)?;
    Ok(size / bw + size / ps)
}

/// Processing time multiplied by the processor price.
pub fn processing_cost(size: f64, speed: f64, price: f64) -> Result<f64> {
    let ps = require_positive("speed", speed)?;
    Ok(size / ps * price)
}

/// Processing cost minus the user's offered cost, with the sign as written
/// in the broker model (may be negative).
pub fn profit(size: f64, speed: f64, price: f64, cost: f64) -> Result<f64> {
    Ok(processing_cost(size, speed, price)? - cost)
}

/// Busy time multiplied by the processor's energy rate.
pub fn energy(size: f64, speed: f64, energy_rate: f64) -> Result<f64> {
    let ps = require_positive("speed", speed)?;
    Ok(size / ps * energy_rate)
}

pub fn objectives(task: &Task, p: &Processor) -> Result<ObjectiveTriple> {
    Ok(ObjectiveTriple {
        response_time: response_time(task.size, p.bandwidth, p.speed)?,
        energy: energy(task.size, p.speed, p.energy_rate)?,
        profit: profit(task.size, p.speed, p.price, task.cost)?,
    })
}

/// Competition ("1224") ranks; `better(a, b)` is true when `a` beats `b`.
fn competition_ranks(values: &[f64], better: impl Fn(f64, f64) -> bool) -> Vec<u32> {
    values
        .iter()
        .map(|&v| 1 + values.iter().filter(|&&o| better(o, v)).count() as u32)
        .collect()
}

/// Picks one processor per task from `live` by rank sum.
pub fn rank_assign(
    triples: &BTreeMap<(TaskId, ProcessorId), ObjectiveTriple>,
    live: &BTreeSet<ProcessorId>,
) -> Result<PlacementResult> {
    if live.is_empty() {
        return Err(Error::NoProcessorAvailable);
    }
    let tasks: BTreeSet<TaskId> = triples.keys().map(|(t, _)| *t).collect();
    let mut result = PlacementResult::default();

    for task in tasks {
        let row: Vec<(ProcessorId, ObjectiveTriple)> = live
            .iter()
            .map(|&p| {
                triples
                    .get(&(task, p))
                    .map(|tr| (p, *tr))
                    .ok_or(Error::MissingObjective {
                        task: task.0,
                        processor: p.0,
                    })
            })
            .collect::<Result<_>>()?;

        let rt: Vec<f64> = row.iter().map(|(_, t)| t.response_time).collect();
        let en: Vec<f64> = row.iter().map(|(_, t)| t.energy).collect();
        let pf: Vec<f64> = row.iter().map(|(_, t)| t.profit).collect();
        let rt_rank = competition_ranks(&rt, |a, b| a < b);
        let en_rank = competition_ranks(&en, |a, b| a < b);
        let pf_rank = competition_ranks(&pf, |a, b| a > b);

        let mut best: Option<(u32, f64, ProcessorId)> = None;
        for (k, (p, triple)) in row.iter().enumerate() {
            let sum = rt_rank[k] + en_rank[k] + pf_rank[k];
            result.rank_sums.insert((task, *p), sum);
            let candidate = (sum, triple.response_time, *p);
            // Row is in ascending id order, so strict comparison keeps the lowest id.
            let wins = match best {
                None => true,
                Some((bs, brt, _)) => sum < bs || (sum == bs && triple.response_time < brt),
            };
            if wins {
                best = Some(candidate);
            }
        }
        let (_, _, winner) = best.expect("live set is non-empty");
        result.assignment.insert(task, winner);
    }
    Ok(result)
}

/// Ranks one task over the given processors and returns the winner.
pub fn place_task<'a>(
    task: &Task,
    candidates: impl IntoIterator<Item = &'a Processor>,
) -> Result<ProcessorId> {
    let mut triples = BTreeMap::new();
    let mut live = BTreeSet::new();
    for p in candidates {
        triples.insert((task.id, p.id), objectives(task, p)?);
        live.insert(p.id);
    }
    let result = rank_assign(&triples, &live)?;
    result
        .assignment
        .get(&task.id)
        .copied()
        .ok_or(Error::NoProcessorAvailable)
}
