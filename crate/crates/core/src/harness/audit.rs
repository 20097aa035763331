//! Independent replay of a stored trace.
//!
//! The auditor rebuilds every correct process's received set from the send and
//! deliver records, then re-derives what the simulator claimed: each recorded
//! log against the global finalization function, the violations of the
//! correct processes' union, the delivery envelope and the trace digest.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::finalize::{global_f, longest_break_chain};
use crate::log::Log;
use crate::message::{Message, MessageSet};
use crate::netsim::{Trace, TraceRecord};
use crate::types::{Digest, ProcessId, Timeslot};

use super::metrics::correct_processes;
use super::report::{report, Check, RunReport};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("trace was recorded without network records")]
    NotFull,
    #[error("message {0} delivered before any record carries its payload")]
    UnknownMessage(Digest),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub report: RunReport,
    pub agreement_checks: u64,
    pub agreement_mismatches: u64,
    pub violations: usize,
    pub chain_violations: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

pub fn audit(trace: &Trace) -> Result<AuditReport, AuditError> {
    if !trace.summary.full {
        return Err(AuditError::NotFull);
    }
    let cfg = &trace.summary.config;
    let model = cfg.delay_model();
    let correct = correct_processes(trace);
    let pi: BTreeSet<ProcessId> = cfg.processes().into_iter().collect();
    let log_g = Log::empty();

    let mut payloads: HashMap<Digest, Message> = HashMap::new();
    let mut held: BTreeMap<ProcessId, MessageSet> = correct.iter().map(|&p| (p, MessageSet::new())).collect();
    let mut logs: BTreeMap<ProcessId, Log> = BTreeMap::new();
    let mut first_held: HashMap<Digest, Timeslot> = HashMap::new();
    let mut arrival: HashMap<(ProcessId, Digest), Timeslot> = HashMap::new();
    let mut union = MessageSet::new();
    let mut violated = BTreeSet::new();
    let mut chain = vec![log_g.clone()];
    let (mut checks, mut mismatches) = (0u64, 0u64);
    let mut dirty: BTreeSet<ProcessId> = BTreeSet::new();
    let mut union_dirty = false;

    let mut hasher = Sha256::new();
    let mut current: Option<Timeslot> = None;
    let mut close_slot = |dirty: &mut BTreeSet<ProcessId>,
                          union_dirty: &mut bool,
                          held: &BTreeMap<ProcessId, MessageSet>,
                          logs: &BTreeMap<ProcessId, Log>,
                          union: &MessageSet| {
        for p in std::mem::take(dirty) {
            if let Some(log) = logs.get(&p) {
                checks += 1;
                if global_f(&held[&p], &pi, &log_g).log != *log {
                    mismatches += 1;
                }
            }
        }
        if std::mem::take(union_dirty) {
            let result = global_f(union, &pi, &log_g);
            violated.extend(result.per_r.iter().filter(|e| e.violated).map(|e| e.r));
            if chain.last() != Some(&result.log) {
                chain.push(result.log);
            }
        }
    };

    for rec in &trace.records {
        let line = serde_json::to_vec(rec).expect("trace record serializes");
        hasher.update(&line);
        hasher.update(b"\n");
        let t = rec.time().unwrap_or(0);
        if current != Some(t) {
            close_slot(&mut dirty, &mut union_dirty, &held, &logs, &union);
            current = Some(t);
        }
        let mut hold = |p: ProcessId, m: Message| {
            if let Some(set) = held.get_mut(&p) {
                first_held.entry(m.digest()).or_insert(t);
                arrival.entry((p, m.digest())).or_insert(t);
                set.insert(m.clone());
                union.insert(m);
                dirty.insert(p);
                union_dirty = true;
            }
        };
        match rec {
            TraceRecord::Send { from, msgs, payloads: carried, .. } => {
                for m in carried {
                    payloads.insert(m.digest(), m.clone());
                }
                if correct.contains(from) {
                    for d in msgs {
                        let m = payloads.get(d).cloned().ok_or(AuditError::UnknownMessage(*d))?;
                        hold(*from, m);
                    }
                }
            }
            TraceRecord::Deliver {
                to,
                msgs,
                payloads: carried,
                ..
            } => {
                for m in carried {
                    payloads.insert(m.digest(), m.clone());
                }
                for d in msgs {
                    let m = payloads.get(d).cloned().ok_or(AuditError::UnknownMessage(*d))?;
                    hold(*to, m);
                }
            }
            TraceRecord::State { process, log, .. } => {
                logs.insert(*process, log.clone());
                dirty.insert(*process);
            }
            _ => {}
        }
    }
    close_slot(&mut dirty, &mut union_dirty, &held, &logs, &union);
    let digest = Digest(hasher.finalize().into());

    let horizon = trace.summary.t;
    let mut late = 0usize;
    for (d, &t1) in &first_held {
        for &q in &correct {
            let due = model.latest(t1).max(cfg.offset(q));
            if due > horizon {
                continue;
            }
            if arrival.get(&(q, *d)).is_none_or(|&at| at > due) {
                late += 1;
            }
        }
    }

    let violations = violated.len();
    let chain_violations = longest_break_chain(&chain);
    let s = &trace.summary;
    let checks_out = vec![
        Check {
            name: "digest".into(),
            passed: digest == s.digest,
            detail: format!("recomputed {}", digest.short()),
        },
        Check {
            name: "local_agreement_replay".into(),
            passed: mismatches == 0,
            detail: format!("{mismatches} mismatches in {checks} checks"),
        },
        Check {
            name: "violations_replay".into(),
            passed: violations == s.violations && chain_violations == s.chain_violations,
            detail: format!("{violations} violated executions, chain {chain_violations}"),
        },
        Check {
            name: "delivery_envelope".into(),
            passed: late == 0,
            detail: format!("{late} late receipts"),
        },
    ];
    let report = report(trace);
    let passed = report.passed && checks_out.iter().all(|c| c.passed);
    Ok(AuditReport {
        report,
        agreement_checks: checks,
        agreement_mismatches: mismatches,
        violations,
        chain_violations,
        checks: checks_out,
        passed,
    })
}
