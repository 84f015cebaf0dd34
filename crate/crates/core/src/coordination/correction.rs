use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

/// Cluster-level quantities the correction loop works from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    /// Tasks the cluster can serve per interval.
    pub cluster_capacity: f64,
    /// Tasks that passed through the task handler during the interval.
    pub total_tasks: u64,
    /// Tasks routed to schedulers during the interval.
    pub total_requests: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "magnitude", rename_all = "snake_case")]
pub enum Variation {
    Success(f64),
    Failure(f64),
    Neither,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub interval: u64,
    pub beta: f64,
    pub state: ClusterState,
    pub success_variations: Vec<f64>,
    pub failure_variations: Vec<f64>,
    pub over_capacity: f64,
    pub under_capacity: f64,
    pub capacity_deviation: f64,
    /// Signed change to the cluster capacity.
    pub adjustment: f64,
}

/// Capacity per demanded task, `CC / T`.
pub fn standard_value(cluster_capacity: f64, total_tasks: u64) -> Result<f64> {
    if total_tasks == 0 {
        return Err(Error::NoDemand);
    }
    Ok(cluster_capacity / total_tasks as f64)
}

/// Above the standard value is a success variation, below it a failure
/// variation; magnitudes are relative to `beta` and never negative.
pub fn classify_variation(measured: f64, beta: f64) -> Result<Variation> {
    let beta = require_positive("beta", beta)?;
    Ok(if measured > beta {
        Variation::Success((measured - beta) / beta)
    } else if measured < beta {
        Variation::Failure((beta - measured) / beta)
    } else {
        Variation::Neither
    })
}

/// Sums the variations into over and under capacity and sizes the
/// resulting capacity change.
///
/// When over capacity dominates (or ties) the cluster grows by
/// `(CC / TR) * CD`; when under capacity dominates it shrinks by
/// `CD * CC / (TR + CD)`. `corrected_semantics` swaps the two branches.
pub fn capacity_correction(
    interval: u64,
    state: &ClusterState,
    variations: &[Variation],
    corrected_semantics: bool,
) -> Result<CorrectionReport> {
    if state.total_requests == 0 {
        return Err(Error::NoRequests);
    }
    let beta = standard_value(state.cluster_capacity, state.total_tasks)?;
    let mut success_variations = Vec::new();
    let mut failure_variations = Vec::new();
    for v in variations {
        match *v {
            Variation::Success(m) => success_variations.push(m),
            Variation::Failure(m) => failure_variations.push(m),
            Variation::Neither => {}
        }
    }
    let oc: f64 = success_variations.iter().sum();
    let uc: f64 = failure_variations.iter().sum();
    let cd = (oc - uc).abs();
    let cc = state.cluster_capacity;
    let tr = state.total_requests as f64;
    let increase = cc / tr * cd;
    let reduction = cd * (cc / (tr + cd));
    let grow = (oc >= uc) != corrected_semantics;
    let adjustment = if cd == 0.0 {
        0.0
    } else if grow {
        increase
    } else {
        -reduction
    };
    Ok(CorrectionReport {
        interval,
        beta,
        state: *state,
        success_variations,
        failure_variations,
        over_capacity: oc,
        under_capacity: uc,
        capacity_deviation: cd,
        adjustment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(cc: f64, tr: u64) -> ClusterState {
        ClusterState {
            cluster_capacity: cc,
            total_tasks: tr,
            total_requests: tr,
        }
    }

    #[test]
    fn standard_value_examples() {
        assert_eq!(standard_value(100.0, 20).unwrap(), 5.0);
        assert_eq!(standard_value(7.0, 7).unwrap(), 1.0);
        assert_eq!(
            standard_value(200.0, 20).unwrap(),
            2.0 * standard_value(100.0, 20).unwrap()
        );
        assert!(matches!(standard_value(1.0, 0), Err(Error::NoDemand)));
    }

    #[test]
    fn classification_examples() {
        match classify_variation(6.0, 5.0).unwrap() {
            Variation::Success(m) => assert!((m - 0.2).abs() < 1e-15),
            v => panic!("{v:?}"),
        }
        match classify_variation(4.0, 5.0).unwrap() {
            Variation::Failure(m) => assert!((m - 0.2).abs() < 1e-15),
            v => panic!("{v:?}"),
        }
        assert_eq!(classify_variation(5.0, 5.0).unwrap(), Variation::Neither);
        assert!(classify_variation(1.0, 0.0).is_err());
    }

    #[test]
    fn increase_when_over_capacity_dominates() {
        let v = [Variation::Success(2.0), Variation::Failure(1.0)];
        let r = capacity_correction(0, &state(100.0, 50), &v, false).unwrap();
        assert_eq!(r.capacity_deviation, 1.0);
        assert_eq!(r.adjustment, 2.0);
    }

    #[test]
    fn reduction_when_under_capacity_dominates() {
        let v = [Variation::Success(1.0), Variation::Failure(2.0)];
        let r = capacity_correction(0, &state(100.0, 49), &v, false).unwrap();
        assert_eq!(r.capacity_deviation, 1.0);
        assert_eq!(r.adjustment, -2.0);
    }

    #[test]
    fn corrected_semantics_swaps_branches() {
        let v = [Variation::Success(1.0), Variation::Failure(2.0)];
        let r = capacity_correction(0, &state(100.0, 50), &v, true).unwrap();
        assert_eq!(r.adjustment, 2.0);
        let v = [Variation::Success(2.0), Variation::Failure(1.0)];
        let r = capacity_correction(0, &state(100.0, 49), &v, true).unwrap();
        assert_eq!(r.adjustment, -2.0);
    }

    #[test]
    fn balanced_variations_need_no_change() {
        let v = [
            Variation::Success(0.5),
            Variation::Failure(0.5),
            Variation::Neither,
        ];
        let r = capacity_correction(0, &state(100.0, 10), &v, false).unwrap();
        assert_eq!(r.capacity_deviation, 0.0);
        assert_eq!(r.adjustment, 0.0);
        let r = capacity_correction(0, &state(100.0, 10), &[Variation::Neither; 4], false).unwrap();
        assert_eq!(r.adjustment, 0.0);
    }

    #[test]
    fn no_requests_is_signalled() {
        let s = ClusterState {
            cluster_capacity: 10.0,
            total_tasks: 3,
            total_requests: 0,
        };
        assert!(matches!(
            capacity_correction(0, &s, &[], false),
            Err(Error::NoRequests)
        ));
    }

    proptest! {
        #[test]
        fn report_sums_are_consistent(
            mags in prop::collection::vec((any::<bool>(), 0.0f64..2.0), 0..20),
            cc in 1.0f64..500.0, tr in 1u64..200, corrected in any::<bool>(),
        ) {
            let v: Vec<Variation> = mags.iter()
                .map(|&(s, m)| if s { Variation::Success(m) } else { Variation::Failure(m) }).collect();
            let r = capacity_correction(0, &state(cc, tr), &v, corrected).unwrap();
            prop_assert_eq!(r.over_capacity, r.success_variations.iter().sum::<f64>());
            prop_assert_eq!(r.under_capacity, r.failure_variations.iter().sum::<f64>());
            prop_assert_eq!(r.capacity_deviation, (r.over_capacity - r.under_capacity).abs());
            prop_assert!(r.success_variations.iter().chain(&r.failure_variations).all(|m| *m >= 0.0));
        }

        #[test]
        fn increase_is_homogeneous_in_deviation(cd in 0.0f64..10.0, k in 0.1f64..10.0, cc in 1.0f64..500.0, tr in 1u64..200) {
            let one = capacity_correction(0, &state(cc, tr), &[Variation::Success(cd)], false).unwrap();
            let scaled = capacity_correction(0, &state(cc, tr), &[Variation::Success(k * cd)], false).unwrap();
            prop_assert!((scaled.adjustment - k * one.adjustment).abs() <= 1e-9 * scaled.adjustment.abs().max(1.0));
        }
    }
}
