//! Run reports: every asserted bound, derived from a trace alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adversary::StrategyId;
use crate::log::Log;
use crate::netsim::{wrapper_config, Trace, TraceRecord};
use crate::types::{Digest, ProcessId, Timeslot};

use super::metrics::{check_liveness, measure_recovery, measure_rollback, timelines, LivenessReport, RecoveryMeasure};
use super::schedule::{ratio, violation_bound};

/// Version of the report layout.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub seed: u64,
    pub n: usize,
    pub faulty: BTreeSet<ProcessId>,
    pub strategy: StrategyId,
    pub violations: usize,
    pub chain_violations: usize,
    pub violation_bound: Option<u32>,
    pub rollback_observed: Option<Timeslot>,
    pub rollback_bound: Option<Timeslot>,
    pub recoveries: Vec<RecoveryMeasure>,
    pub final_logs: BTreeMap<ProcessId, Log>,
    pub liveness: LivenessReport,
    pub agreement_checks: u64,
    pub agreement_mismatches: u64,
    pub checks: Vec<Check>,
    pub digest: Digest,
    pub passed: bool,
}

struct Exit {
    t: Timeslot,
    removed: BTreeSet<ProcessId>,
    genesis: Log,
}

pub fn report(trace: &Trace) -> RunReport {
    let s = &trace.summary;
    let cfg = &s.config;
    let ds = cfg.delta_star;
    let unit = wrapper_config(cfg).delta_star;
    let third = ratio(1, 3);
    let bound = violation_bound(&third, &third, s.faulty.len(), cfg.n);
    let recoveries = measure_recovery(trace);
    let rollback = measure_rollback(trace);
    let liveness = check_liveness(trace, &recoveries);
    let final_logs = timelines(trace)
        .into_iter()
        .map(|(p, snaps)| (p, snaps.last().map(|s| s.log.clone()).unwrap_or_default()))
        .collect();

    let mut entries: BTreeMap<u32, BTreeMap<ProcessId, Timeslot>> = BTreeMap::new();
    let mut exits: BTreeMap<u32, BTreeMap<ProcessId, Exit>> = BTreeMap::new();
    let mut culprits = BTreeSet::new();
    for rec in &trace.records {
        match rec {
            TraceRecord::RecoveryBegin { t, process, r } => {
                entries.entry(*r).or_default().insert(*process, *t);
            }
            TraceRecord::RecoveryEnd {
                t,
                process,
                r,
                removed,
                genesis,
            } => {
                exits.entry(*r).or_default().insert(
                    *process,
                    Exit {
                        t: *t,
                        removed: removed.clone(),
                        genesis: genesis.clone(),
                    },
                );
            }
            TraceRecord::Violation { culprits: c, .. } => culprits.extend(c.iter().copied()),
            _ => {}
        }
    }

    let mut checks = Vec::new();
    checks.push(Check::new(
        "local_agreement",
        s.agreement_mismatches == 0,
        format!("{} mismatches in {} checks", s.agreement_mismatches, s.agreement_checks),
    ));
    checks.push(match bound {
        Some(b) => Check::new(
            "violation_bound",
            s.violations <= b as usize,
            format!("{} violations, at most {b} allowed", s.violations),
        ),
        None => Check::new("violation_bound", true, "no bound at this corruption level"),
    });
    let missing: Vec<u32> = (1..=s.violations as u32).filter(|r| !entries.contains_key(r)).collect();
    checks.push(Check::new(
        "violation_implies_recovery",
        missing.is_empty(),
        format!("recoveries never begun: {missing:?}"),
    ));
    if let Some(ds) = ds {
        checks.push(match &rollback {
            Ok(h) => Check::new("rollback", *h < 2 * ds, format!("held {h} slots, bound {}", 2 * ds)),
            Err(e) => Check::new("rollback", false, e.to_string()),
        });
    }
    let slow: Vec<u32> = recoveries.iter().filter(|m| !m.within_bound()).map(|m| m.r).collect();
    checks.push(Check::new(
        "recovery_time",
        slow.is_empty(),
        format!("recoveries over bound or unfinished: {slow:?}"),
    ));
    let correct = super::metrics::correct_processes(trace);
    let spread_ok = entries.values().all(|e| {
        let (lo, hi) = (e.values().min(), e.values().max());
        correct.iter().all(|p| e.contains_key(p)) && hi.zip(lo).is_some_and(|(h, l)| h - l <= unit)
    });
    checks.push(Check::new("recovery_entry_spread", spread_ok, format!("within {unit} slots")));
    let agree = exits.values().all(|e| {
        let first = e.values().next();
        let ts = e.values().map(|x| x.t);
        let spread = ts.clone().max().unwrap_or(0) - ts.min().unwrap_or(0);
        correct.iter().all(|p| e.contains_key(p))
            && spread <= unit
            && e.values().all(|x| {
                first.is_some_and(|f| f.removed == x.removed && f.genesis == x.genesis)
            })
    });
    checks.push(Check::new(
        "recovery_exit_agreement",
        agree,
        "same removed set and genesis log, exits within one bound",
    ));
    let multi: Vec<u32> = s.finish_qc_proposals.iter().filter(|(_, &c)| c > 1).map(|(r, _)| *r).collect();
    checks.push(Check::new(
        "unique_finish_qc",
        multi.is_empty(),
        format!("recoveries with several finish-QC'd proposals: {multi:?}"),
    ));
    let mut genesis = Log::empty();
    let mut monotone = true;
    for e in exits.values() {
        if let Some(x) = e.values().next() {
            monotone &= genesis.is_prefix_of(&x.genesis);
            genesis = x.genesis.clone();
        }
    }
    checks.push(Check::new("genesis_monotone", monotone, "each genesis log extends the previous"));
    let removed: BTreeSet<ProcessId> = recoveries.iter().flat_map(|m| m.removed.iter().copied()).collect();
    let sound = removed.is_subset(&s.faulty) && removed.is_subset(&culprits);
    checks.push(Check::new(
        "removal_soundness",
        sound,
        format!("removed {removed:?}, provably guilty {culprits:?}"),
    ));
    checks.push(Check::new(
        "liveness",
        liveness.late.is_empty(),
        format!(
            "{} checked, {} late, {} past the horizon",
            liveness.checked,
            liveness.late.len(),
            liveness.pending
        ),
    ));
    checks.push(Check::new(
        "capability",
        s.rejected_emissions == 0,
        format!("{} forged emissions dropped", s.rejected_emissions),
    ));

    let passed = checks.iter().all(|c| c.passed);
    RunReport {
        schema: REPORT_SCHEMA,
        seed: cfg.seed,
        n: cfg.n,
        faulty: s.faulty.clone(),
        strategy: cfg.strategy.id,
        violations: s.violations,
        chain_violations: s.chain_violations,
        violation_bound: bound,
        rollback_observed: rollback.ok(),
        rollback_bound: ds.map(|d| 2 * d),
        recoveries,
        final_logs,
        liveness,
        agreement_checks: s.agreement_checks,
        agreement_mismatches: s.agreement_mismatches,
        checks,
        digest: s.digest,
        passed,
    }
}

impl RunReport {
    /// Human-readable summary.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed {}  n {}  faulty {:?}  strategy {:?}",
            self.seed,
            self.n,
            self.faulty.iter().map(|p| p.0).collect::<Vec<_>>(),
            self.strategy
        );
        let _ = writeln!(
            out,
            "violations {} (chain {})  rollback {}  digest {}",
            self.violations,
            self.chain_violations,
            self.rollback_observed.map_or("-".into(), |h| h.to_string()),
            self.digest.short()
        );
        for m in &self.recoveries {
            let _ = writeln!(
                out,
                "recovery {}: begin {} end {} duration {} v0 {} bound {} removed {:?}",
                m.r,
                m.begin,
                opt(m.end),
                opt(m.duration),
                opt(m.v0),
                opt(m.bound),
                m.removed.iter().map(|p| p.0).collect::<Vec<_>>()
            );
        }
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  {mark}  {:width$}  {}", c.name, c.detail);
        }
        out
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}
