//! Measurements over a finished trace.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::log::Log;
use crate::netsim::{wrapper_config, Trace, TraceRecord};
use crate::perm::Permutation;
use crate::types::{ProcessId, Timeslot, Transaction};
use crate::wrapper::lead;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("trace ends while {0} is in recovery {1}")]
    MidRecovery(ProcessId, u32),
}

/// One state record of one process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub t: Timeslot,
    pub r: u32,
    pub rec: bool,
    pub log: Log,
    pub log_star: Log,
}

/// State records per correct process, in time order.
pub fn timelines(trace: &Trace) -> BTreeMap<ProcessId, Vec<Snapshot>> {
    let mut out: BTreeMap<ProcessId, Vec<Snapshot>> = correct_processes(trace)
        .into_iter()
        .map(|p| (p, Vec::new()))
        .collect();
    for rec in &trace.records {
        if let TraceRecord::State {
            t,
            process,
            r,
            rec,
            log,
            log_star,
            ..
        } = rec
        {
            out.entry(*process).or_default().push(Snapshot {
                t: *t,
                r: *r,
                rec: *rec,
                log: log.clone(),
                log_star: log_star.clone(),
            });
        }
    }
    out
}

pub fn correct_processes(trace: &Trace) -> BTreeSet<ProcessId> {
    trace
        .summary
        .config
        .processes()
        .into_iter()
        .filter(|p| !trace.summary.faulty.contains(p))
        .collect()
}

/// The longest time any correct process held a prefix that is not a prefix
/// of every correct process's final log. Rollback is bounded by `h` iff the
/// result is below `h`.
pub fn measure_rollback(trace: &Trace) -> Result<Timeslot, MetricError> {
    let lines = timelines(trace);
    let mut finals = Vec::new();
    for (p, snaps) in &lines {
        match snaps.last() {
            Some(s) if s.rec => return Err(MetricError::MidRecovery(*p, s.r)),
            Some(s) => finals.push(s.log.clone()),
            None => finals.push(Log::empty()),
        }
    }
    let stable = |log: &Log| finals.iter().map(|f| log.common_prefix_len(f)).min().unwrap_or(0);
    let end = trace.summary.t + 1;
    let mut worst = 0;
    for snaps in lines.values() {
        let mut held = Log::empty();
        let mut since: Vec<Timeslot> = Vec::new();
        for s in snaps {
            let keep = held.common_prefix_len(&s.log);
            if keep < held.len() {
                let safe = stable(&held);
                for (k, &from) in since.iter().enumerate().skip(keep) {
                    if k >= safe {
                        worst = worst.max(s.t - from);
                    }
                }
            }
            since.truncate(keep);
            since.resize(s.log.len(), s.t);
            held = s.log.clone();
        }
        let safe = stable(&held);
        for (k, &from) in since.iter().enumerate() {
            if k >= safe {
                worst = worst.max(end - from);
            }
        }
    }
    Ok(worst)
}

/// Timing of one recovery across the correct processes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryMeasure {
    pub r: u32,
    /// First correct entry.
    pub begin: Timeslot,
    /// Last correct exit, once every correct process exited.
    pub end: Option<Timeslot>,
    pub duration: Option<Timeslot>,
    /// First view whose leader is correct.
    pub v0: Option<u32>,
    /// `2Δ* + 8 v0 Δ*`.
    pub bound: Option<Timeslot>,
    pub members: BTreeSet<ProcessId>,
    pub removed: BTreeSet<ProcessId>,
}

impl RecoveryMeasure {
    pub fn within_bound(&self) -> bool {
        matches!((self.duration, self.bound), (Some(d), Some(b)) if d <= b)
    }
}

pub fn measure_recovery(trace: &Trace) -> Vec<RecoveryMeasure> {
    let correct = correct_processes(trace);
    let faulty = &trace.summary.faulty;
    let ds = wrapper_config(&trace.summary.config).delta_star;
    let pi_star = Permutation::new(trace.summary.pi_star.clone()).ok();
    let mut begins: BTreeMap<u32, Timeslot> = BTreeMap::new();
    let mut ends: BTreeMap<u32, BTreeMap<ProcessId, (Timeslot, BTreeSet<ProcessId>)>> = BTreeMap::new();
    for rec in &trace.records {
        match rec {
            TraceRecord::RecoveryBegin { t, r, .. } => {
                begins.entry(*r).or_insert(*t);
            }
            TraceRecord::RecoveryEnd {
                t, process, r, removed, ..
            } => {
                ends.entry(*r).or_default().insert(*process, (*t, removed.clone()));
            }
            _ => {}
        }
    }
    let mut members: BTreeSet<ProcessId> = trace.summary.config.processes().into_iter().collect();
    let mut out = Vec::new();
    for (&r, &begin) in &begins {
        let exits = ends.get(&r);
        let all_exited = exits.is_some_and(|e| correct.iter().all(|p| e.contains_key(p)));
        let end = all_exited
            .then(|| exits.and_then(|e| e.values().map(|(t, _)| *t).max()))
            .flatten();
        let v0 = pi_star.as_ref().and_then(|perm| {
            (1..=members.len() as u32).find(|&v| lead(v, perm, &members).is_ok_and(|l| !faulty.contains(&l)))
        });
        let removed = exits
            .and_then(|e| e.values().next())
            .map(|(_, rm)| rm.clone())
            .unwrap_or_default();
        out.push(RecoveryMeasure {
            r,
            begin,
            end,
            duration: end.map(|e| e - begin),
            v0,
            bound: v0.map(|v| 2 * ds + 8 * v as Timeslot * ds),
            members: members.clone(),
            removed: removed.clone(),
        });
        members = members.difference(&removed).copied().collect();
    }
    out
}

/// Outcome of the liveness check.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LivenessReport {
    pub checked: usize,
    /// Deadline beyond the horizon.
    pub pending: usize,
    /// Transactions missing from some correct log at their deadline.
    pub late: Vec<(Transaction, Timeslot)>,
}

/// Every transaction received by a correct process at `t` must be in every
/// correct log by `max(t, GST) + ℓ`, pushed back to `end + ℓ` by any recovery
/// overlapping the window, where `ℓ = 8Δn'` for the `n'` members of the
/// execution then running.
pub fn check_liveness(trace: &Trace, recoveries: &[RecoveryMeasure]) -> LivenessReport {
    let cfg = &trace.summary.config;
    let correct = correct_processes(trace);
    let lines = timelines(trace);
    let mut first_rx: BTreeMap<Transaction, Timeslot> = BTreeMap::new();
    for (t, p, tx) in cfg.arrivals() {
        if correct.contains(&p) {
            let rx = t.max(cfg.offset(p));
            let slot = first_rx.entry(tx).or_insert(rx);
            *slot = (*slot).min(rx);
        }
    }
    let n_at = |s: Timeslot| {
        recoveries
            .iter()
            .filter(|m| m.end.is_some_and(|e| e <= s))
            .last()
            .map(|m| m.members.len() - m.removed.len())
            .unwrap_or(cfg.n)
    };
    let ell = |s: Timeslot| 8 * cfg.delta * n_at(s) as Timeslot;
    let mut report = LivenessReport::default();
    'txs: for (tx, rx) in first_rx {
        let mut start = rx.max(cfg.gst);
        loop {
            let deadline = start + ell(start);
            let mut moved = false;
            for m in recoveries {
                if m.begin <= deadline && m.end.is_none_or(|e| e > start) {
                    match m.end {
                        Some(e) => {
                            start = e;
                            moved = true;
                        }
                        None => {
                            report.pending += 1;
                            continue 'txs;
                        }
                    }
                }
            }
            if !moved {
                break;
            }
        }
        let deadline = start + ell(start);
        if deadline > trace.summary.t {
            report.pending += 1;
            continue;
        }
        report.checked += 1;
        let ok = lines.values().all(|snaps| {
            snaps
                .iter()
                .take_while(|s| s.t <= deadline)
                .last()
                .is_some_and(|s| s.log.contains(&tx))
        });
        if !ok {
            report.late.push((tx, deadline));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{FaultySpec, ScenarioConfig, TraceSummary};
    use crate::testkit::txs;
    use crate::types::Digest;

    fn config(n: usize, delta_star: Timeslot, horizon: Timeslot) -> ScenarioConfig {
        serde_json::from_value(serde_json::json!({
            "n": n, "faulty": {"explicit": []}, "delta": 1, "delta_star": delta_star,
            "horizon": horizon, "seed": 0
        }))
        .unwrap()
    }

    fn scripted(cfg: ScenarioConfig, records: Vec<TraceRecord>) -> Trace {
        let faulty = match &cfg.faulty {
            FaultySpec::Explicit(ids) => ids.iter().map(|&i| ProcessId(i)).collect(),
            FaultySpec::Count(_) => unreachable!(),
        };
        Trace {
            records,
            summary: TraceSummary {
                t: cfg.horizon,
                pi_star: cfg.processes(),
                faulty,
                config: cfg,
                violations: 0,
                chain_violations: 0,
                agreement_mismatches: 0,
                agreement_checks: 0,
                rejected_emissions: 0,
                finish_qc_proposals: BTreeMap::new(),
                messages: 0,
                deliveries: 0,
                digest: Digest::of_bytes(b""),
                full: true,
            },
        }
    }

    fn state(t: Timeslot, p: u16, log: &[&str], rec: bool) -> TraceRecord {
        TraceRecord::State {
            t,
            process: ProcessId(p),
            local_t: t,
            r: 1,
            rec,
            log: Log::from_txs(txs(log)),
            log_star: Log::empty(),
        }
    }

    #[test]
    fn rollback_of_a_long_held_prefix_is_caught() {
        // p1 holds [a] for 25 slots, past 2Δ* = 20, before switching to [b].
        let trace = scripted(
            config(2, 10, 100),
            vec![state(0, 1, &["a"], false), state(0, 2, &["b"], false), state(25, 1, &["b"], false)],
        );
        let observed = measure_rollback(&trace).unwrap();
        assert_eq!(observed, 25);
        assert!(observed >= 20);
    }

    #[test]
    fn short_rollbacks_and_stable_prefixes() {
        let trace = scripted(
            config(2, 10, 100),
            vec![
                state(0, 1, &["a"], false),
                state(0, 2, &["b"], false),
                state(5, 1, &["b"], false),
                state(6, 1, &["b", "c"], false),
                state(6, 2, &["b", "c"], false),
            ],
        );
        assert_eq!(measure_rollback(&trace).unwrap(), 5);
    }

    #[test]
    fn a_prefix_never_given_up_but_not_final_counts_to_the_end() {
        let trace = scripted(
            config(2, 10, 100),
            vec![state(0, 1, &["a"], false), state(0, 2, &["b"], false)],
        );
        // Each holds a prefix the other lacks until the horizon.
        assert_eq!(measure_rollback(&trace).unwrap(), 101);
    }

    #[test]
    fn trace_ending_mid_recovery_is_an_error() {
        let trace = scripted(config(2, 10, 100), vec![state(3, 1, &[], true)]);
        assert_eq!(measure_rollback(&trace), Err(MetricError::MidRecovery(ProcessId(1), 1)));
    }

    #[test]
    fn recovery_timing_and_v0() {
        let mut cfg = config(3, 10, 500);
        cfg.faulty = FaultySpec::Explicit(vec![1]);
        let records = vec![
            TraceRecord::RecoveryBegin { t: 40, process: ProcessId(2), r: 1 },
            TraceRecord::RecoveryBegin { t: 41, process: ProcessId(3), r: 1 },
            TraceRecord::RecoveryEnd {
                t: 140,
                process: ProcessId(2),
                r: 1,
                removed: [ProcessId(1)].into(),
                genesis: Log::empty(),
            },
            TraceRecord::RecoveryEnd {
                t: 141,
                process: ProcessId(3),
                r: 1,
                removed: [ProcessId(1)].into(),
                genesis: Log::empty(),
            },
        ];
        let m = measure_recovery(&scripted(cfg, records));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].duration, Some(101));
        // Π* = (1, 2, 3) and 1 is faulty, so the second view is the first good one.
        assert_eq!(m[0].v0, Some(2));
        assert_eq!(m[0].bound, Some(20 + 160));
        assert!(m[0].within_bound());
    }
}
