mod common;

use std::collections::BTreeMap;

use common::{audit, cluster, crash, recover};
use synclb::domain::{ProcessorId, SchedulerId, Task, TaskId};
use synclb::metrics::{build_report, fault_percentage, response_stats};
use synclb::simkernel::scenario::Workload;
use synclb::simkernel::trace::{DispatchTarget, IntervalRecord, TraceEvent};
use synclb::simkernel::{run, EventKind, EventTrace, FaultTarget};

const S0: FaultTarget = FaultTarget::Scheduler(SchedulerId(0));

fn kinds(trace: &EventTrace) -> Vec<EventKind> {
    trace.events().map(|e| e.kind()).collect()
}

fn count(trace: &EventTrace, kind: EventKind) -> usize {
    kinds(trace).into_iter().filter(|k| *k == kind).count()
}

#[test]
fn single_task_completes_after_transfer_plus_processing() {
    let mut s = cluster(&[20.0], 1, 0, 0);
    s.processors[0].bandwidth = 10.0;
    s.workload.tasks = vec![Task {
        id: TaskId(0),
        user_id: 0,
        payload_fingerprint: 1,
        size: 100.0,
        cost: 500.0,
        arrival_time: 2.0,
        deadline_hint: 30.0,
    }];
    let trace = run(&s).unwrap();
    assert_eq!(count(&trace, EventKind::TaskArrival), 1);
    assert_eq!(count(&trace, EventKind::DispatchTick), 1);
    assert_eq!(count(&trace, EventKind::TaskComplete), 1);
    let done = trace
        .records
        .iter()
        .find(|r| r.event.kind() == EventKind::TaskComplete)
        .unwrap();
    // 100/10 on the wire, 100/20 on the CPU
    assert_eq!(done.time, 2.0 + 10.0 + 5.0);
    match &done.event {
        TraceEvent::TaskComplete { response_time, .. } => assert_eq!(*response_time, 15.0),
        e => panic!("{e:?}"),
    }
}

#[test]
fn empty_workload_has_only_interval_ticks() {
    let mut s = cluster(&[10.0, 12.0], 1, 0, 0);
    s.workload = Workload::empty();
    let trace = run(&s).unwrap();
    assert!(!trace.records.is_empty());
    assert!(kinds(&trace)
        .iter()
        .all(|k| *k == EventKind::FeedbackInterval));
    assert!(!trace.truncated());

    // with peers the protocol still exchanges reports, but no task moves
    s.schedulers = cluster(&[1.0], 3, 0, 0).schedulers;
    let trace = run(&s).unwrap();
    assert!(kinds(&trace)
        .iter()
        .all(|k| matches!(k, EventKind::FeedbackInterval | EventKind::MessageDeliver)));
}

#[test]
fn same_seed_gives_identical_trace() {
    let mut s = cluster(&[8.0, 7.0], 3, 40, 4);
    s.workload.arrival = synclb::simkernel::scenario::ArrivalKind::Poisson;
    s.faults = vec![crash(12.0, S0), recover(31.0, S0)];
    let a = run(&s).unwrap().to_jsonl_string();
    let b = run(&s).unwrap().to_jsonl_string();
    assert_eq!(a, b);
    s.seed += 1;
    assert_ne!(a, run(&s).unwrap().to_jsonl_string());
}

#[test]
fn jsonl_round_trip() {
    let mut s = cluster(&[8.0, 7.0], 3, 30, 3);
    s.faults = vec![crash(12.0, FaultTarget::Processor(ProcessorId(1)))];
    let trace = run(&s).unwrap();
    let text = trace.to_jsonl_string();
    let back = EventTrace::read_jsonl(text.as_bytes()).unwrap();
    assert_eq!(back, trace);
    assert!(text.lines().next().unwrap().starts_with("{\"meta\""));
    assert!(text.lines().last().unwrap().starts_with("{\"end\""));
}

#[test]
fn coordinator_crash_triggers_election_after_three_missed_multicasts() {
    let mut s = cluster(&[10.0, 12.0, 11.0], 3, 5, 8);
    // dies before collecting interval 0, so no multicast ever arrives
    s.faults = vec![crash(12.0, S0)];
    let trace = run(&s).unwrap();

    let mut misses: BTreeMap<SchedulerId, Vec<(f64, u32, bool)>> = BTreeMap::new();
    for r in &trace.records {
        if let TraceEvent::FeedbackInterval(IntervalRecord::Tick { misses: m, .. }) = &r.event {
            for x in m {
                misses
                    .entry(x.scheduler)
                    .or_default()
                    .push((r.time, x.missed, x.election_started));
            }
        }
    }
    for s in [SchedulerId(1), SchedulerId(2)] {
        assert_eq!(
            misses[&s],
            vec![(20.0, 1, false), (30.0, 2, false), (40.0, 3, true)],
            "{s}"
        );
    }

    let verdicts: Vec<(f64, SchedulerId, SchedulerId)> = trace
        .records
        .iter()
        .filter_map(|r| match &r.event {
            TraceEvent::ElectionTimeout {
                scheduler, elected, ..
            } => Some((r.time, *scheduler, *elected)),
            _ => None,
        })
        .collect();
    assert_eq!(verdicts.len(), 2);
    // equal bids: lowest surviving id wins, and both agree
    assert!(verdicts
        .iter()
        .all(|v| v.0 == 45.0 && v.2 == SchedulerId(1)));

    let collectors: Vec<(u64, SchedulerId)> = trace
        .events()
        .filter_map(|e| match e {
            TraceEvent::FeedbackInterval(IntervalRecord::Collect {
                interval,
                coordinator,
                ..
            }) => Some((*interval, *coordinator)),
            _ => None,
        })
        .collect();
    assert!(collectors
        .iter()
        .all(|(k, c)| *k >= 4 && *c == SchedulerId(1)));
    assert!(collectors.iter().any(|(k, _)| *k == 4));
    assert_eq!(audit(&trace).stranded, vec![]);
}

#[test]
fn sole_scheduler_crash_strands_its_queue() {
    let mut s = cluster(&[10.0], 1, 25, 2);
    s.faults = vec![crash(5.0, S0)];
    let trace = run(&s).unwrap();
    assert!(trace.truncated());
    let a = audit(&trace);
    assert!(!a.stranded.is_empty());
    let expected = 100.0 * a.stranded.len() as f64 / a.admitted as f64;
    assert_eq!(fault_percentage(&trace), expected);
    assert!(fault_percentage(&trace) > 0.0);
}

#[test]
fn sole_scheduler_recovers_and_drains() {
    let mut s = cluster(&[10.0], 1, 25, 2);
    s.faults = vec![crash(5.0, S0), recover(25.0, S0)];
    let trace = run(&s).unwrap();
    assert!(!trace.truncated());
    assert_eq!(audit(&trace).stranded, vec![]);
    // nothing was handed out while the only scheduler was down
    for r in &trace.records {
        if let TraceEvent::DispatchTick { routed, .. } = &r.event {
            assert!(routed.is_empty() || r.time >= 25.0 || r.time < 5.0);
        }
    }
}

#[test]
fn processor_crash_requeues_in_flight_tasks() {
    let mut s = cluster(&[8.0, 7.0], 3, 30, 3);
    let p1 = FaultTarget::Processor(ProcessorId(1));
    s.faults = vec![crash(14.0, p1), recover(33.0, p1)];
    let trace = run(&s).unwrap();
    let reclaimed = trace
        .events()
        .find_map(|e| match e {
            TraceEvent::Fault { reclaimed, .. } if !reclaimed.is_empty() => Some(reclaimed.clone()),
            _ => None,
        })
        .expect("crash hit a busy processor");
    let a = audit(&trace);
    assert_eq!(a.stranded, vec![]);
    // requeued tasks complete on a processor after the crash
    for t in reclaimed {
        let done = trace
            .records
            .iter()
            .find(|r| matches!(&r.event, TraceEvent::TaskComplete { task, .. } if *task == t));
        assert!(done.unwrap().time > 14.0);
    }
}

#[test]
fn idle_processor_crash_and_recover_changes_nothing() {
    let base = cluster(&[10.0, 12.0], 2, 3, 2);
    let mut faulty = base.clone();
    let p0 = FaultTarget::Processor(ProcessorId(0));
    // all six tasks are done long before t = 50
    faulty.faults = vec![crash(50.0, p0), recover(51.0, p0)];
    faulty.horizon = Some(500.0);
    let mut plain = base;
    plain.horizon = Some(500.0);
    let completions = |t: &EventTrace| -> Vec<(u64, f64)> {
        t.records
            .iter()
            .filter_map(|r| match &r.event {
                TraceEvent::TaskComplete { task, .. } => Some((task.0, r.time)),
                _ => None,
            })
            .collect()
    };
    let a = run(&plain).unwrap();
    let b = run(&faulty).unwrap();
    assert_eq!(completions(&a), completions(&b));
    let reclaimed: usize = b
        .events()
        .map(|e| match e {
            TraceEvent::Fault { reclaimed, .. } => reclaimed.len(),
            _ => 0,
        })
        .sum();
    assert_eq!(reclaimed, 0);
}

#[test]
fn multi_scheduler_crashes_lose_nothing() {
    for victim in 0..3 {
        for with_recover in [false, true] {
            let mut s = cluster(&[8.0, 7.0], 3, 50, 4);
            let t = FaultTarget::Scheduler(SchedulerId(victim));
            s.faults = vec![crash(13.0, t)];
            if with_recover {
                s.faults.push(recover(27.0, t));
            }
            let trace = run(&s).unwrap();
            let a = audit(&trace);
            assert_eq!(a.stranded, vec![], "victim {victim} recover {with_recover}");
            assert_eq!(fault_percentage(&trace), 0.0);
            assert!(!trace.truncated());
        }
    }
}

#[test]
fn response_statistics_match_event_pairs() {
    let trace = run(&cluster(&[8.0, 7.0], 3, 40, 3)).unwrap();
    let mut arrivals = BTreeMap::new();
    let mut rts = Vec::new();
    for r in &trace.records {
        match &r.event {
            TraceEvent::TaskArrival { task, .. } => {
                arrivals.insert(task.id, r.time);
            }
            TraceEvent::TaskComplete {
                task,
                response_time,
                ..
            } => {
                let rt = r.time - arrivals[task];
                assert!((rt - response_time).abs() < 1e-9);
                // never faster than the unloaded response time
                assert!(rt >= 10.0 / 100.0 + 10.0 / 8.0 - 1e-9);
                rts.push(rt);
            }
            _ => {}
        }
    }
    let stats = response_stats(&trace);
    let mean = rts.iter().sum::<f64>() / rts.len() as f64;
    assert!((stats.mean - mean).abs() < 1e-9);
    rts.sort_by(f64::total_cmp);
    assert_eq!(stats.p95, rts[(rts.len() * 95).div_ceil(100) - 1]);
}

#[test]
fn handler_routes_after_processor_crash() {
    let mut s = cluster(&[8.0, 7.0], 2, 20, 2);
    s.faults = vec![crash(6.0, FaultTarget::Processor(ProcessorId(0)))];
    let trace = run(&s).unwrap();
    let handler_ticks = trace
        .events()
        .filter(|e| matches!(e, TraceEvent::DispatchTick { target: DispatchTarget::Handler, routed, .. } if !routed.is_empty()))
        .count();
    assert!(handler_ticks >= 1);
    let report = build_report(&trace);
    assert_eq!(report.summary.lost, 0);
}
