//! The wrapper's finalization function, evaluated on a bare message set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::base::{finalize_fn, has_violation, Instance};
use crate::log::Log;
use crate::message::MessageSet;
use crate::types::ProcessId;
use crate::wrapper::finish_qcs;

/// What the loop saw in one execution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSummary {
    pub r: u32,
    pub members: BTreeSet<ProcessId>,
    pub genesis: Log,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalizeResult {
    pub log: Log,
    /// The execution the loop stopped in.
    pub executions_traversed: u32,
    pub per_r: Vec<ExecutionSummary>,
}

/// `F(M)`: walk executions while each has a violation and a unique proposal with
/// a finish-QC; return the certified log of the first clean execution, or the
/// genesis log of the first execution that cannot be resolved.
///
/// ```
/// use smr_recovery::{global_f, Log, MessageSet};
/// use smr_recovery::types::process_set;
///
/// let out = global_f(&MessageSet::new(), &process_set(4).into_iter().collect(), &Log::empty());
/// assert_eq!(out.log, Log::empty());
/// assert_eq!(out.executions_traversed, 1);
/// ```
pub fn global_f(msgs: &MessageSet, pi: &BTreeSet<ProcessId>, log_g: &Log) -> FinalizeResult {
    let mut r = 1;
    let mut members = pi.clone();
    let mut genesis = log_g.clone();
    let mut per_r = Vec::new();
    loop {
        let inst = Instance::new(r, members.iter().copied(), genesis.clone());
        let violated = has_violation(&inst, msgs);
        per_r.push(ExecutionSummary {
            r,
            members: members.clone(),
            genesis: genesis.clone(),
            violated,
        });
        if !violated {
            return FinalizeResult {
                log: finalize_fn(&inst, msgs),
                executions_traversed: r,
                per_r,
            };
        }
        let mut finished = finish_qcs(msgs, r, &members);
        if finished.len() != 1 {
            return FinalizeResult {
                log: genesis,
                executions_traversed: r,
                per_r,
            };
        }
        let p = finished.pop().expect("one proposal").proposal;
        members = members.difference(&p.faulty).copied().collect();
        genesis = p.sigma;
        r += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("message set {0} is not contained in its successor")]
    NotMonotone(usize),
}

/// Number of consistency violations along a `⊆`-chain of message sets.
///
/// Returns the largest `r` for which the chain has members
/// `M_{t_0} ⊂ M_{t_1} ⊂ ... ⊂ M_{t_r}` whose finalized logs each fail to extend
/// the previous one: the violation count of the definition, restricted to sets
/// actually observed along the chain.
pub fn count_violations(chain: &[MessageSet], pi: &BTreeSet<ProcessId>, log_g: &Log) -> Result<usize, ChainError> {
    for (i, pair) in chain.windows(2).enumerate() {
        if !pair[0].is_subset_of(&pair[1]) {
            return Err(ChainError::NotMonotone(i));
        }
    }
    let logs: Vec<Log> = chain.iter().map(|m| global_f(m, pi, log_g).log).collect();
    Ok(longest_break_chain(&logs))
}

/// Longest subsequence of `logs` in which each log fails to extend the previous
/// one.
///
/// Along a `⊆`-chain, two sets with different logs are different sets, so every
/// such subsequence comes from strictly growing sets. Runs of equal logs are
/// collapsed first.
pub fn longest_break_chain(logs: &[Log]) -> usize {
    let mut runs: Vec<&Log> = Vec::new();
    for log in logs {
        if runs.last() != Some(&log) {
            runs.push(log);
        }
    }
    let mut best = vec![0usize; runs.len()];
    for j in 0..runs.len() {
        for i in 0..j {
            if !runs[i].is_prefix_of(runs[j]) {
                best[j] = best[j].max(best[i] + 1);
            }
        }
    }
    best.into_iter().max().unwrap_or(0)
}
