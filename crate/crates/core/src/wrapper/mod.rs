//! The recovery wrapper: one process's state machine.
//!
//! A process runs executions `E_1, E_2, ...` of the base protocol. When the
//! messages of the current execution contain a consistency violation it stops
//! the execution, broadcasts its log in a genesis message and runs the recovery
//! procedure: views of `8Δ*` with a leader drawn from the shared permutation,
//! votes, QCs, locks and finally finish votes. A finish-QC fixes the process
//! set and genesis log of the next execution.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::base::{finalize_fn, has_violation, BaseConfig, BaseState, Instance};
use crate::crypto::SigningKey;
use crate::log::Log;
use crate::message::{Message, MessageSet, Payload};
use crate::perm::Permutation;
use crate::types::{ProcessId, Timeslot};

mod types;
mod views;

pub use types::{
    genesis_extends, view_of, FinishQc, FinishVote, GenesisBody, GenesisMessage, QuorumCert,
    RProposal, ViewIndex, ViewProposal, ViewProposalBody, ViewVote,
};
pub use views::{
    assemble_qcs, detect_equivocation, finish_qcs, is_majority, known_view_proposals, lead,
    majority_sigma, make_proposal, qc_is_valid, InvalidProposal, Judge, RecoveryView,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapperConfig {
    pub delta: Timeslot,
    pub delta_star: Timeslot,
    pub rho_c: (u32, u32),
}

impl WrapperConfig {
    pub fn new(delta: Timeslot, delta_star: Timeslot) -> Self {
        WrapperConfig {
            delta,
            delta_star,
            rho_c: (1, 3),
        }
    }

    pub fn base(&self) -> BaseConfig {
        BaseConfig { delta: self.delta }
    }

    /// Start of view `v` relative to `t0`.
    pub fn view_start(&self, t0: Timeslot, v: u32) -> Timeslot {
        t0 + 2 * self.delta_star + 8 * (v as Timeslot - 1) * self.delta_star
    }

    /// The view whose window contains `t`, if recovery began at `t0`.
    pub fn view_at(&self, t0: Timeslot, t: Timeslot) -> Option<u32> {
        let first = t0 + 2 * self.delta_star;
        let len = 8 * self.delta_star.max(1);
        (t >= first).then(|| ((t - first) / len) as u32 + 1)
    }

    /// When the leader of view `v` proposes.
    pub fn proposal_time(&self, t0: Timeslot, v: u32) -> Timeslot {
        self.view_start(t0, v) + 2 * self.delta_star
    }
}

/// Notable transitions, reported to whoever drives the process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WrapperEvent {
    /// A violation in `E_r` was detected and the `r`-th recovery began.
    RecoveryBegin { r: u32 },
    /// The `r`-th recovery ended with a finish-QC.
    RecoveryEnd {
        r: u32,
        removed: BTreeSet<ProcessId>,
        genesis: Log,
    },
    /// `lead(r, v)` was requested beyond `|Π_r|`.
    LeaderOutOfRange { r: u32, v: u32 },
}

/// Inputs fixed for the whole run.
#[derive(Debug)]
pub struct Process {
    pub me: ProcessId,
    pub key: SigningKey,
    pub pi: BTreeSet<ProcessId>,
    pub log_g: Log,
    pub pi_star: Permutation,
    pub cfg: WrapperConfig,
}

/// Per-process state of the wrapper.
#[derive(Clone, Debug)]
pub struct WrapperState {
    pub r: u32,
    pub rec: bool,
    pub log: Log,
    pub log_star: Log,
    pub pi_r: BTreeMap<u32, BTreeSet<ProcessId>>,
    pub log_g_r: BTreeMap<u32, Log>,
    pub msgs: MessageSet,
    pub q_plus: Option<QuorumCert>,
    pub t0: Option<Timeslot>,
    pub p_i_r: BTreeMap<u32, BTreeSet<ProcessId>>,
    pub voted: BTreeSet<ViewIndex>,
    pub lockset: BTreeSet<ViewIndex>,
    /// Expiry of the `(r, v)`-timer, per view.
    pub timers: BTreeMap<ViewIndex, Timeslot>,
    /// `held_since[k]` is the local time since which the prefix of length `k + 1`
    /// of `log` has been continuously held.
    held_since: Vec<Timeslot>,
    base: Option<BaseState>,
    started: bool,
}

impl WrapperState {
    pub fn new(proc: &Process) -> Self {
        WrapperState {
            r: 1,
            rec: false,
            log: proc.log_g.clone(),
            log_star: proc.log_g.clone(),
            pi_r: BTreeMap::from([(1, proc.pi.clone())]),
            log_g_r: BTreeMap::from([(1, proc.log_g.clone())]),
            msgs: MessageSet::new(),
            q_plus: None,
            t0: None,
            p_i_r: BTreeMap::new(),
            voted: BTreeSet::new(),
            lockset: BTreeSet::new(),
            timers: BTreeMap::new(),
            held_since: vec![0; proc.log_g.len()],
            base: None,
            started: false,
        }
    }

    pub fn current_pi(&self) -> &BTreeSet<ProcessId> {
        &self.pi_r[&self.r]
    }

    pub fn current_genesis(&self) -> &Log {
        &self.log_g_r[&self.r]
    }

    pub fn instance(&self) -> Instance {
        Instance::new(self.r, self.current_pi().iter().copied(), self.current_genesis().clone())
    }

    pub fn base(&self) -> Option<&BaseState> {
        self.base.as_ref()
    }

    fn recovery_view<'a>(&'a self, proc: &'a Process) -> RecoveryView<'a> {
        RecoveryView {
            r: self.r,
            pi_r: self.current_pi(),
            log_g_r: self.current_genesis(),
            pi_star: &proc.pi_star,
            rho_c: proc.cfg.rho_c,
        }
    }

    /// Replaces `log`, keeping the tenure of the common prefix.
    fn set_log(&mut self, new: Log, now: Timeslot) {
        let keep = self.log.common_prefix_len(&new);
        self.held_since.truncate(keep);
        self.held_since.resize(new.len(), now);
        self.log = new;
    }

    /// Adds delivered messages to the local message set.
    pub fn ingest(&mut self, inbox: impl IntoIterator<Item = Message>) {
        self.msgs.extend(inbox);
    }
}

/// Output of one timeslot.
#[derive(Debug, Default)]
pub struct StepOutput {
    pub outbox: Vec<Message>,
    pub events: Vec<WrapperEvent>,
}

impl StepOutput {
    fn send(&mut self, state: &mut WrapperState, payload: Payload) {
        let msg = Message::new(payload);
        state.msgs.insert(msg.clone());
        self.outbox.push(msg);
    }
}

/// Runs local timeslot `t` of the wrapper after `inbox` is delivered.
///
/// Blocks run in pseudocode order. When a finish-QC starts a new execution, or
/// the base protocol emits messages, the execution checks run again within the
/// same slot, so at the end of every slot `log` agrees with the global
/// finalization function applied to the received messages.
pub fn wrapper_step(
    proc: &Process,
    state: &mut WrapperState,
    t: Timeslot,
    inbox: impl IntoIterator<Item = Message>,
) -> StepOutput {
    let mut out = StepOutput::default();
    state.ingest(inbox);
    if !state.started {
        state.started = true;
        start_execution(proc, state, t);
    }
    let mut base_stepped: Option<u32> = None;
    loop {
        if !state.rec {
            check_violation(proc, state, t, &mut out);
        }
        if !state.rec {
            try_extend_logs(proc, state, t);
        }
        if state.rec {
            let before = state.r;
            recovery_tick(proc, state, t, &mut out);
            if state.r != before {
                continue;
            }
        }
        if !state.rec && base_stepped != Some(state.r) {
            base_stepped = Some(state.r);
            if let Some(base) = state.base.as_mut() {
                let sent = base.step(t, &mut state.msgs, &proc.key);
                if !sent.is_empty() {
                    out.outbox.extend(sent);
                    continue;
                }
            }
        }
        break;
    }
    out
}

fn start_execution(proc: &Process, state: &mut WrapperState, t: Timeslot) {
    state.base = state
        .current_pi()
        .contains(&proc.me)
        .then(|| BaseState::new(state.instance(), proc.me, proc.cfg.base(), t));
}

/// On a violation: broadcast the held log, fall back to the genesis log and
/// enter recovery.
fn check_violation(proc: &Process, state: &mut WrapperState, t: Timeslot, out: &mut StepOutput) {
    if !has_violation(&state.instance(), &state.msgs) {
        return;
    }
    let genesis = GenesisBody {
        log: state.log.clone(),
        r: state.r,
    };
    out.send(state, Payload::Genesis(proc.key.sign(genesis)));
    let reset = state.current_genesis().clone();
    state.set_log(reset, t);
    state.base = None;
    state.rec = true;
    out.events.push(WrapperEvent::RecoveryBegin { r: state.r });
}

/// Extends `log` to the longest certified sequence, then
/// strongly finalizes the longest prefix held for `2Δ*`.
pub fn try_extend_logs(proc: &Process, state: &mut WrapperState, t: Timeslot) {
    let certified = finalize_fn(&state.instance(), &state.msgs);
    if state.log.is_strict_prefix_of(&certified) {
        state.set_log(certified, t);
    }
    let tenure = 2 * proc.cfg.delta_star;
    let held = state
        .held_since
        .iter()
        .take_while(|&&since| since + tenure <= t)
        .count();
    if held > state.log_star.len() {
        let candidate = state.log.truncated(held);
        if state.log_star.is_prefix_of(&candidate) {
            state.log_star = candidate;
        }
    }
}

/// One slot of recovery: genesis collection, then the current view.
fn recovery_tick(proc: &Process, state: &mut WrapperState, t: Timeslot, out: &mut StepOutput) {
    let cfg = proc.cfg;
    let t0 = *state.t0.get_or_insert(t);
    if t == t0 + 2 * cfg.delta_star {
        let senders = state
            .msgs
            .genesis(state.r)
            .iter()
            .map(|g| g.signer())
            .filter(|p| state.current_pi().contains(p))
            .collect();
        state.p_i_r.insert(state.r, senders);
    }
    if let Some(v) = cfg.view_at(t0, t) {
        if t == cfg.proposal_time(t0, v) {
            propose(proc, state, v, out);
        }
        view_tick(proc, state, t, v, out);
    }
    finish(proc, state, t, out);
}

fn propose(proc: &Process, state: &mut WrapperState, v: u32, out: &mut StepOutput) {
    let view = state.recovery_view(proc);
    match view.lead(v) {
        Ok(leader) if leader == proc.me => {
            if let Some(p) = make_proposal(&view, v, &state.msgs, &proc.key) {
                out.send(state, Payload::ViewProposal(p));
            }
        }
        Ok(_) => {}
        Err(_) => out.events.push(WrapperEvent::LeaderOutOfRange { r: state.r, v }),
    }
}

/// Voting and proposing in the view `v` containing `t`.
pub fn view_tick(proc: &Process, state: &mut WrapperState, t: Timeslot, v: u32, out: &mut StepOutput) {
    let idx = ViewIndex::new(state.r, v);
    if !state.voted.contains(&idx) {
        let judge = Judge {
            view: Some(state.recovery_view(proc)),
            msgs: &state.msgs,
            p_i_r: state.p_i_r.get(&state.r),
            q_plus: state.q_plus.as_ref(),
        };
        let choice = known_view_proposals(&state.msgs, state.r)
            .into_values()
            .find(|p| p.body().v == v && judge.is_valid(p));
        if let Some(p) = choice {
            state.voted.insert(idx);
            out.send(state, Payload::ViewVote(proc.key.sign(p)));
        }
    }
    if !state.lockset.contains(&idx) {
        let qc = assemble_qcs(&state.msgs, state.r, state.current_pi())
            .into_iter()
            .find(|q| q.view() == idx);
        if let Some(qc) = qc {
            state.q_plus = Some(qc);
            state.lockset.insert(idx);
            state.timers.insert(idx, t + 2 * proc.cfg.delta_star);
        }
    }
    if state.timers.get(&idx) == Some(&t) {
        let leader = state.recovery_view(proc).lead(v);
        let equivocated = leader.is_ok_and(|l| detect_equivocation(&state.msgs, state.r, v, l));
        if !equivocated {
            if let Some(lock) = &state.q_plus {
                let vote = proc.key.sign(lock.proposal().clone());
                out.send(state, Payload::FinishVote(vote));
            }
        }
    }
}

/// Leaves recovery once a finish-QC is known and starts the next execution.
fn finish(proc: &Process, state: &mut WrapperState, t: Timeslot, out: &mut StepOutput) {
    let Some(qc) = finish_qcs(&state.msgs, state.r, state.current_pi()).into_iter().next() else {
        return;
    };
    let p = qc.proposal;
    let next: BTreeSet<ProcessId> = state.current_pi().difference(&p.faulty).copied().collect();
    let finished = state.r;
    state.r += 1;
    state.pi_r.insert(state.r, next);
    state.log_g_r.insert(state.r, p.sigma.clone());
    state.t0 = None;
    state.q_plus = None;
    state.voted.clear();
    state.lockset.clear();
    state.timers.clear();
    start_execution(proc, state, t);
    state.rec = false;
    state.set_log(p.sigma.clone(), t);
    out.events.push(WrapperEvent::RecoveryEnd {
        r: finished,
        removed: p.faulty,
        genesis: p.sigma.clone(),
    });
}
