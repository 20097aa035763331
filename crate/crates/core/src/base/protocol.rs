//! Honest behaviour of the base protocol.
//!
//! Heights are decided one at a time. Each height runs rounds of `4Δ` with a
//! round-robin leader. A round has two phases: a non-binding prevote for the
//! leader's block, then, once `q` prevotes for one block are seen in a round (a
//! "polka"), a binding [`BlockVote`](super::BlockVote). A correct process casts
//! one binding vote per height, and the leader of a later round re-proposes the
//! block of the highest polka it knows, so a failed round does not strand
//! processes that already voted.
//!
//! A process whose round times out with work pending but without a prevote
//! sends a nil prevote, and
//! it only moves on once `q` members have prevoted in that round. No correct
//! process can therefore run ahead alone, and the skip rule below pulls the
//! stragglers forward.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::crypto::SigningKey;
use crate::message::{Message, MessageSet, Payload};
use crate::types::{Digest, ProcessId, Timeslot, Transaction};

use super::finalize::{finalized_chain, valid_qcs};
use super::{Block, BlockProposal, BlockQc, Instance, Prevote, VoteBody};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseConfig {
    /// Post-GST delay bound `Δ`; a round lasts `4Δ`.
    pub delta: Timeslot,
}

impl BaseConfig {
    pub fn round_length(&self) -> Timeslot {
        4 * self.delta.max(1)
    }

    /// Liveness parameter `ℓ = 8Δn'`: one full leader rotation of rounds.
    pub fn liveness_bound(&self, n_prime: usize) -> Timeslot {
        8 * self.delta.max(1) * n_prime as Timeslot
    }
}

/// One process's state in one execution.
#[derive(Clone, Debug)]
pub struct BaseState {
    inst: Instance,
    leaders: Vec<ProcessId>,
    me: ProcessId,
    cfg: BaseConfig,
    height: u64,
    round: u32,
    round_started: Timeslot,
    proposed: BTreeSet<(u64, u32)>,
    prevoted: BTreeSet<(u64, u32)>,
    bound: BTreeMap<u64, Digest>,
    qc_sent: BTreeSet<Digest>,
    /// When a prevote quorum was first seen for a `(height, round)`.
    quorum_seen: Option<((u64, u32), Timeslot)>,
}

struct RoundTally {
    voters: usize,
    best: usize,
}

impl BaseState {
    pub fn new(inst: Instance, me: ProcessId, cfg: BaseConfig, now: Timeslot) -> Self {
        let leaders = inst.members.iter().copied().collect();
        BaseState {
            inst,
            leaders,
            me,
            cfg,
            height: 1,
            round: 1,
            round_started: now,
            proposed: BTreeSet::new(),
            prevoted: BTreeSet::new(),
            bound: BTreeMap::new(),
            qc_sent: BTreeSet::new(),
            quorum_seen: None,
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// Local time at which the current round began.
    pub fn round_started(&self) -> Timeslot {
        self.round_started
    }

    /// Round-robin over members by index, shifted by one per height.
    pub fn leader(&self, height: u64, round: u32) -> ProcessId {
        leader_of(&self.leaders, height, round)
    }

    /// Runs one local timeslot. Emitted messages are added to `msgs` (a process
    /// receives its own messages immediately) and returned for sending.
    pub fn step(&mut self, now: Timeslot, msgs: &mut MessageSet, key: &SigningKey) -> Vec<Message> {
        debug_assert_eq!(key.owner(), self.me);
        let mut out = Vec::new();
        let (tip, finalized) = self.sync_height(now, msgs);
        self.advance_round(now, msgs, &finalized);
        if let Some(p) = self.propose(msgs, tip, &finalized, key) {
            emit(p, msgs, &mut out);
        }
        if let Some(p) = self.prevote(now, msgs, tip, &finalized, key) {
            emit(p, msgs, &mut out);
        }
        if let Some(p) = self.bind(msgs, tip, key) {
            emit(p, msgs, &mut out);
        }
        if let Some(p) = self.assemble_qc(msgs) {
            emit(p, msgs, &mut out);
        }
        out
    }

    /// Moves to the height after the finalized tip. Returns the tip and the set
    /// of transactions already finalized.
    fn sync_height(&mut self, now: Timeslot, msgs: &MessageSet) -> (Option<Digest>, HashSet<Transaction>) {
        let chain = finalized_chain(&self.inst, msgs);
        let tip = chain.last().map(|b| b.digest());
        let next = chain.len() as u64 + 1;
        if next > self.height {
            self.height = next;
            self.round = 1;
            self.round_started = now;
        }
        let finalized = self
            .inst
            .genesis
            .entries()
            .iter()
            .chain(chain.iter().flat_map(|b| b.txs().iter()))
            .cloned()
            .collect();
        (tip, finalized)
    }

    fn advance_round(&mut self, now: Timeslot, msgs: &MessageSet, finalized: &HashSet<Transaction>) {
        let slot = (self.height, self.round);
        if self.timed_out(now) && !self.prevoted.contains(&slot) && !self.has_work(msgs, finalized) {
            // Idle: give whatever arrives next a full round.
            self.round_started = now;
        }
        let tally = self.round_tally(msgs);
        if self.timed_out(now) && tally.voters >= self.inst.quorum() {
            let since = match self.quorum_seen {
                Some((s, at)) if s == slot => at,
                _ => {
                    self.quorum_seen = Some((slot, now));
                    now
                }
            };
            // Wait for stragglers while a polka is still possible, so that a
            // late one is not overtaken by another in the next round.
            let missing = self.inst.n() - tally.voters;
            let open = tally.best + missing >= self.inst.quorum() && tally.best < self.inst.quorum();
            if !open || now >= since + 2 * self.cfg.delta.max(1) {
                self.round += 1;
                self.round_started = now;
            }
        }
        // Jump ahead when enough members are provably in a later round that at
        // least one of them is correct.
        let threshold = self.inst.n() + 1 - self.inst.quorum();
        let ex = msgs.exec(self.inst.exec);
        let mut later: BTreeMap<u32, BTreeSet<ProcessId>> = BTreeMap::new();
        let proposals = ex
            .proposals
            .iter()
            .map(|p| (p.body().block.height(), p.body().round, p.signer()));
        let prevotes = ex
            .prevotes
            .iter()
            .map(|p| (p.body().height, p.body().round, p.signer()));
        for (h, r, s) in proposals.chain(prevotes) {
            if h == self.height && r > self.round && self.inst.is_member(s) {
                later.entry(r).or_default().insert(s);
            }
        }
        if let Some((&r, _)) = later.iter().rev().find(|(_, s)| s.len() >= threshold) {
            self.round = r;
            self.round_started = now;
        }
    }

    fn timed_out(&self, now: Timeslot) -> bool {
        now >= self.round_started + self.cfg.round_length()
    }

    /// Prevotes of members in the current round.
    fn round_tally(&self, msgs: &MessageSet) -> RoundTally {
        let mut voters = BTreeSet::new();
        let mut per_block: BTreeMap<Digest, BTreeSet<ProcessId>> = BTreeMap::new();
        for p in &msgs.exec(self.inst.exec).prevotes {
            let b = p.body();
            if b.height != self.height || b.round != self.round || !self.inst.is_member(p.signer()) {
                continue;
            }
            voters.insert(p.signer());
            if let Some(d) = b.digest {
                per_block.entry(d).or_default().insert(p.signer());
            }
        }
        RoundTally {
            voters: voters.len(),
            best: per_block.values().map(BTreeSet::len).max().unwrap_or(0),
        }
    }

    fn has_work(&self, msgs: &MessageSet, finalized: &HashSet<Transaction>) -> bool {
        self.bound.contains_key(&self.height) || self.best_polka(msgs).is_some() || has_pending(msgs, finalized)
    }

    /// The block to carry over from earlier rounds of this height, if any: the
    /// one this process voted for, else the one of the highest polka.
    fn carried_block(&self, msgs: &MessageSet, tip: Option<Digest>) -> Option<Block> {
        let digest = match self.bound.get(&self.height) {
            Some(d) => Some(*d),
            None => self.best_polka(msgs).map(|(_, d)| d),
        }?;
        self.find_block(msgs, digest).filter(|b| b.parent() == tip)
    }

    fn propose(
        &mut self,
        msgs: &MessageSet,
        tip: Option<Digest>,
        finalized: &HashSet<Transaction>,
        key: &SigningKey,
    ) -> Option<Payload> {
        let slot = (self.height, self.round);
        if self.leader(self.height, self.round) != self.me || self.proposed.contains(&slot) {
            return None;
        }
        let block = match self.carried_block(msgs, tip) {
            Some(b) => b,
            None => {
                let mut seen = HashSet::new();
                let pending: Vec<Transaction> = msgs
                    .txs()
                    .iter()
                    .filter(|tx| !finalized.contains(*tx) && seen.insert(*tx))
                    .cloned()
                    .collect();
                if pending.is_empty() {
                    return None;
                }
                Block::new(self.height, tip, pending, self.me, self.inst.exec)
            }
        };
        self.proposed.insert(slot);
        Some(Payload::BlockProposal(key.sign(BlockProposal {
            block,
            round: self.round,
        })))
    }

    fn prevote(
        &mut self,
        now: Timeslot,
        msgs: &MessageSet,
        tip: Option<Digest>,
        finalized: &HashSet<Transaction>,
        key: &SigningKey,
    ) -> Option<Payload> {
        let slot = (self.height, self.round);
        if self.prevoted.contains(&slot) {
            return None;
        }
        let leader = self.leader(self.height, self.round);
        let required = match self.bound.get(&self.height) {
            Some(d) => Some(*d),
            None => self.best_polka(msgs).map(|(_, d)| d),
        };
        let mut candidates: Vec<&Block> = msgs
            .exec(self.inst.exec)
            .proposals
            .iter()
            .filter(|p| p.signer() == leader && p.body().round == self.round)
            .map(|p| &p.body().block)
            .filter(|b| {
                b.height() == self.height
                    && b.parent() == tip
                    && b.exec() == self.inst.exec
                    && required.is_none_or(|d| d == b.digest())
                    && txs_are_fresh(b.txs(), finalized)
            })
            .collect();
        candidates.sort_by_key(|b| b.digest());
        let digest = match candidates.first() {
            Some(block) => Some(block.digest()),
            None if self.timed_out(now) && self.has_work(msgs, finalized) => None,
            None => return None,
        };
        self.prevoted.insert(slot);
        Some(Payload::Prevote(key.sign(Prevote {
            exec: self.inst.exec,
            height: self.height,
            round: self.round,
            digest,
        })))
    }

    /// Highest-round polka at the current height: `(round, digest)`.
    fn best_polka(&self, msgs: &MessageSet) -> Option<(u32, Digest)> {
        let mut tally: BTreeMap<(u32, Digest), BTreeSet<ProcessId>> = BTreeMap::new();
        for pv in &msgs.exec(self.inst.exec).prevotes {
            let body = pv.body();
            let Some(digest) = body.digest else { continue };
            if body.height == self.height && self.inst.is_member(pv.signer()) {
                tally
                    .entry((body.round, digest))
                    .or_default()
                    .insert(pv.signer());
            }
        }
        let q = self.inst.quorum();
        tally
            .into_iter()
            .filter(|(_, s)| s.len() >= q)
            .map(|(k, _)| k)
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
    }

    fn bind(&mut self, msgs: &MessageSet, tip: Option<Digest>, key: &SigningKey) -> Option<Payload> {
        if self.bound.contains_key(&self.height) {
            return None;
        }
        let (_, digest) = self.best_polka(msgs)?;
        self.find_block(msgs, digest).filter(|b| b.parent() == tip)?;
        self.bound.insert(self.height, digest);
        Some(Payload::Vote(key.sign(VoteBody {
            exec: self.inst.exec,
            height: self.height,
            digest,
        })))
    }

    fn assemble_qc(&mut self, msgs: &MessageSet) -> Option<Payload> {
        let certified = valid_qcs(&self.inst, msgs);
        let mut tally: BTreeMap<Digest, BTreeMap<ProcessId, &super::BlockVote>> = BTreeMap::new();
        for vote in &msgs.exec(self.inst.exec).votes {
            let body = vote.body();
            if body.height == self.height
                && self.inst.is_member(vote.signer())
                && !certified.contains_key(&body.digest)
                && !self.qc_sent.contains(&body.digest)
            {
                tally
                    .entry(body.digest)
                    .or_default()
                    .entry(vote.signer())
                    .or_insert(vote);
            }
        }
        let q = self.inst.quorum();
        let (digest, votes) = tally.into_iter().find(|(_, v)| v.len() >= q)?;
        let block = self.find_block(msgs, digest)?;
        self.qc_sent.insert(digest);
        Some(Payload::Qc(BlockQc {
            block,
            votes: votes.into_values().cloned().collect(),
        }))
    }

    fn find_block(&self, msgs: &MessageSet, digest: Digest) -> Option<Block> {
        msgs.exec(self.inst.exec)
            .proposals
            .iter()
            .map(|p| &p.body().block)
            .find(|b| b.digest() == digest)
            .cloned()
    }
}

pub(crate) fn leader_of(leaders: &[ProcessId], height: u64, round: u32) -> ProcessId {
    let n = leaders.len() as u64;
    leaders[((height - 1 + round as u64 - 1) % n) as usize]
}

fn has_pending(msgs: &MessageSet, finalized: &HashSet<Transaction>) -> bool {
    msgs.txs().iter().any(|tx| !finalized.contains(tx))
}

fn txs_are_fresh(txs: &[Transaction], finalized: &HashSet<Transaction>) -> bool {
    let mut seen = HashSet::new();
    txs.iter().all(|tx| !finalized.contains(tx) && seen.insert(tx))
}

fn emit(payload: Payload, msgs: &mut MessageSet, out: &mut Vec<Message>) {
    let msg = Message::new(payload);
    msgs.insert(msg.clone());
    out.push(msg);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::finalize_fn;
    use crate::log::Log;
    use crate::testkit::{pids, txs, Keys};

    /// Runs `alive` processes of a four-member instance in lockstep with
    /// instant delivery. Returns the message set everyone ends with.
    fn run(alive: &[u16], slots: Timeslot, extra: &[&str]) -> (Instance, MessageSet, Vec<BaseState>) {
        let keys = Keys::new(4);
        let inst = Instance::new(1, pids(&[1, 2, 3, 4]), Log::empty());
        let cfg = BaseConfig { delta: 1 };
        let mut states: Vec<BaseState> = alive
            .iter()
            .map(|&p| BaseState::new(inst.clone(), ProcessId(p), cfg, 0))
            .collect();
        let mut msgs: MessageSet = txs(extra).into_iter().map(|t| Message::new(Payload::Tx(t))).collect();
        for now in 0..slots {
            for s in &mut states {
                let key = keys.get(s.me.0);
                s.step(now, &mut msgs, key);
            }
        }
        (inst, msgs, states)
    }

    #[test]
    fn honest_members_finalize_every_transaction() {
        let (inst, msgs, states) = run(&[1, 2, 3, 4], 40, &["a", "b"]);
        let log = finalize_fn(&inst, &msgs);
        assert_eq!(log.entries(), txs(&["a", "b"]));
        assert!(states.iter().all(|s| s.height() == 2));
        assert!(!crate::base::has_violation(&inst, &msgs));
    }

    #[test]
    fn nothing_is_proposed_without_transactions() {
        let (_, msgs, _) = run(&[1, 2, 3, 4], 3, &[]);
        assert!(msgs.exec(1).proposals.is_empty());
    }

    #[test]
    fn silent_leader_costs_a_round_and_nil_prevotes() {
        // Process 1 leads round 1 of height 1 and never shows up.
        let (inst, msgs, states) = run(&[2, 3, 4], 40, &["a"]);
        let nil = msgs.exec(1).prevotes.iter().filter(|p| p.body().digest.is_none()).count();
        assert_eq!(nil, 3);
        assert_eq!(finalize_fn(&inst, &msgs).entries(), txs(&["a"]));
        assert!(states.iter().all(|s| s.height() == 2));
    }

    #[test]
    fn rounds_wait_for_a_quorum_of_prevotes() {
        // Two live members can never reach q = 3, so neither leaves round 1.
        let (_, _, states) = run(&[2, 3], 60, &["a"]);
        assert!(states.iter().all(|s| s.round() == 1));
    }

    #[test]
    fn leaders_rotate_by_height_and_round() {
        let inst = Instance::new(1, pids(&[1, 2, 3, 4]), Log::empty());
        let s = BaseState::new(inst, ProcessId(1), BaseConfig { delta: 1 }, 0);
        assert_eq!(s.leader(1, 1), ProcessId(1));
        assert_eq!(s.leader(1, 2), ProcessId(2));
        assert_eq!(s.leader(2, 1), ProcessId(2));
        assert_eq!(s.leader(3, 3), ProcessId(1));
    }

    #[test]
    fn bounds_scale_with_delta() {
        let cfg = BaseConfig { delta: 3 };
        assert_eq!(cfg.round_length(), 12);
        assert_eq!(cfg.liveness_bound(9), 216);
        assert_eq!(BaseConfig { delta: 0 }.round_length(), 4);
    }
}
