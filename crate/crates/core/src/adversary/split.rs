//! The attacking strategies, built around one engine: corrupted processes
//! follow the protocol as puppets until the chosen execution reaches a round
//! led by one of them, then stage a split brain. Afterwards the puppets that
//! double-voted fall silent and the rest keep running, with their recovery
//! messages tampered with according to [`Behavior`].

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::base::{finalized_chain, Block, BlockProposal, Prevote, VoteBody};
use crate::message::{Message, Payload};
use crate::netsim::World;
use crate::types::{ProcessId, Timeslot, Transaction};
use crate::wrapper::{majority_sigma, GenesisBody, ViewProposalBody};

use super::{Adversary, Emission, Puppet, Setup, StrategyParams};
use crate::wrapper::Process;

/// How the loyal puppets misbehave during recovery.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Behavior {
    /// Send no proposal when leading a view.
    pub stall_views: bool,
    /// Send `log_{G_r}` in genesis messages instead of the held log.
    pub lie_genesis: bool,
    /// Send two distinct proposals to two halves when leading a view.
    pub equivocate_views: bool,
}

#[derive(Debug)]
struct Split {
    exec: u32,
    side_of: BTreeMap<ProcessId, bool>,
    /// Per side: the block, the correct processes and the corrupted voters.
    sides: Vec<(Block, Vec<ProcessId>, Vec<ProcessId>)>,
    released: bool,
}

#[derive(Debug)]
pub struct SplitBrain {
    puppets: BTreeMap<ProcessId, Puppet>,
    all: Vec<ProcessId>,
    behavior: Behavior,
    params: StrategyParams,
    all_equivocate: bool,
    attacks: VecDeque<u32>,
    launched: usize,
    silenced: BTreeSet<ProcessId>,
    suppressed: BTreeSet<u32>,
    /// Puppet proposals withheld while an attack is armed.
    withheld: HashSet<crate::types::Digest>,
    split: Option<Split>,
}

impl SplitBrain {
    pub fn new(
        setup: Setup,
        behavior: Behavior,
        executions: Vec<u32>,
        params: StrategyParams,
        all_equivocate: bool,
    ) -> Self {
        let all = setup.pi.iter().copied().collect();
        let puppets = setup
            .keys
            .into_iter()
            .map(|(p, key)| {
                let proc = Process {
                    me: p,
                    key,
                    pi: setup.pi.clone(),
                    log_g: setup.log_g.clone(),
                    pi_star: setup.pi_star.clone(),
                    cfg: setup.cfg,
                };
                (p, Puppet::new(proc, setup.offsets.get(&p).copied().unwrap_or(0)))
            })
            .collect();
        SplitBrain {
            puppets,
            all,
            behavior,
            params,
            all_equivocate,
            attacks: executions.into(),
            launched: 0,
            silenced: BTreeSet::new(),
            suppressed: BTreeSet::new(),
            withheld: HashSet::new(),
            split: None,
        }
    }

    /// Processes that double-voted and went silent.
    pub fn equivocators(&self) -> &BTreeSet<ProcessId> {
        &self.silenced
    }

    fn try_launch(&mut self, world: &World<'_>) -> Option<Vec<Emission>> {
        let exec = *self.attacks.front()?;
        let round_len = 4 * world.nodes.values().next()?.proc.cfg.delta;
        let mut at: Option<(u64, u32)> = None;
        for node in world.nodes.values() {
            let s = &node.state;
            if !node.started(world.t) || s.r != exec || s.rec {
                return None;
            }
            let base = s.base()?;
            let local = world.t - node.offset;
            if base.round_started() + round_len < local + 4 {
                return None;
            }
            let here = (base.height(), base.round());
            if at.is_some_and(|a| a != here) {
                return None;
            }
            at = Some(here);
        }
        let (h, k) = at?;
        if h < self.params.min_height {
            return None;
        }
        let any = world.nodes.values().next()?;
        let inst = any.state.base()?.instance().clone();
        let leader = any.state.base()?.leader(h, k);
        if !self.puppets.contains_key(&leader) || self.silenced.contains(&leader) {
            return None;
        }
        let prevoted = world.correct_msgs.exec(exec).prevotes.iter().any(|p| {
            let b = p.body();
            b.height == h && b.round == k
        });
        if prevoted {
            return None;
        }

        let chain = finalized_chain(&inst, &any.state.msgs);
        if chain.len() as u64 + 1 != h {
            return None;
        }
        let tip = chain.last().map(|b| b.digest());
        let finalized: HashSet<&Transaction> = inst
            .genesis
            .entries()
            .iter()
            .chain(chain.iter().flat_map(|b| b.txs().iter()))
            .collect();
        let mut seen = HashSet::new();
        let pending: Vec<Transaction> = world
            .correct_msgs
            .txs()
            .iter()
            .filter(|tx| !finalized.contains(tx) && seen.insert(*tx))
            .take(16)
            .cloned()
            .collect();
        if pending.len() < self.params.min_pending.max(1) {
            return None;
        }

        let q = inst.quorum();
        let faulty: Vec<ProcessId> = inst
            .members
            .iter()
            .copied()
            .filter(|p| self.puppets.contains_key(p) && !self.silenced.contains(p))
            .collect();
        let correct: Vec<ProcessId> = inst.members.iter().copied().filter(|p| world.nodes.contains_key(p)).collect();
        let k_min = (2 * q).saturating_sub(inst.n()).max(1);
        let k_eq = if self.all_equivocate {
            faulty.len()
        } else {
            match (self.launched, self.params.equivocators) {
                (0, Some(x)) => x.max(k_min),
                _ => k_min,
            }
        };
        if k_eq > faulty.len() {
            return None;
        }
        let (equivocators, loyal) = faulty.split_at(k_eq);
        let need = q - k_eq;
        let pool: Vec<ProcessId> = loyal.iter().chain(&correct).copied().collect();
        if pool.len() < 2 * need {
            return None;
        }
        let (side_a, side_b) = pool.split_at(need);

        let mut txs_b = pending.clone();
        txs_b.reverse();
        if txs_b == pending {
            txs_b.pop();
        }
        let blocks = [
            Block::new(h, tip, pending, leader, exec),
            Block::new(h, tip, txs_b, leader, exec),
        ];
        let t = world.t;
        let mut out = Vec::new();
        let mut sides = Vec::new();
        for (side, block) in [side_a, side_b].into_iter().zip(blocks) {
            let to: Vec<ProcessId> = side.iter().copied().filter(|p| world.nodes.contains_key(p)).collect();
            let signers: Vec<ProcessId> = equivocators
                .iter()
                .chain(side.iter().filter(|p| self.puppets.contains_key(p)))
                .copied()
                .collect();
            let leader_key = &self.puppets[&leader].proc.key;
            let mut msgs = vec![Payload::BlockProposal(leader_key.sign(BlockProposal {
                block: block.clone(),
                round: k,
            }))];
            for s in &signers {
                msgs.push(Payload::Prevote(self.puppets[s].proc.key.sign(Prevote {
                    exec,
                    height: h,
                    round: k,
                    digest: Some(block.digest()),
                })));
            }
            for m in msgs {
                out.push(Emission {
                    from: leader,
                    msg: Message::new(m),
                    to: to.clone(),
                    at: Some(t + 1),
                });
            }
            sides.push((block, to, signers));
        }
        let side_of = side_a
            .iter()
            .map(|&p| (p, true))
            .chain(side_b.iter().map(|&p| (p, false)))
            .collect();
        self.split = Some(Split {
            exec,
            side_of,
            sides,
            released: false,
        });
        self.suppressed.insert(exec);
        self.silenced.extend(equivocators.iter().copied());
        self.attacks.pop_front();
        self.launched += 1;
        Some(out)
    }

    /// Once every correct process on both sides has voted for its side's block,
    /// completes both certificates with the corrupted votes and hands each to
    /// its side in the same slot.
    fn release(&mut self, world: &World<'_>) -> Vec<Emission> {
        let Some(split) = self.split.as_mut().filter(|s| !s.released) else {
            return Vec::new();
        };
        let votes = &world.correct_msgs.exec(split.exec).votes;
        let mut out = Vec::new();
        for (block, correct, corrupt) in &split.sides {
            let mut qc_votes: Vec<_> = votes
                .iter()
                .filter(|v| v.body().digest == block.digest() && correct.contains(&v.signer()))
                .cloned()
                .collect();
            if qc_votes.len() < correct.len() {
                return Vec::new();
            }
            for p in corrupt {
                qc_votes.push(self.puppets[p].proc.key.sign(VoteBody {
                    exec: split.exec,
                    height: block.height(),
                    digest: block.digest(),
                }));
            }
            let from = corrupt[0];
            out.push(Emission {
                from,
                msg: Message::new(Payload::Qc(crate::base::BlockQc {
                    block: block.clone(),
                    votes: qc_votes,
                })),
                to: correct.clone(),
                at: Some(world.t + 1),
            });
        }
        split.released = true;
        out
    }

    /// Applies the strategy to one puppet message. Returns what to send and to
    /// whom (`None` meaning everyone else).
    fn filter(&mut self, world: &World<'_>, id: ProcessId, msg: Message) -> Vec<(Message, Option<Vec<ProcessId>>)> {
        let puppet = &self.puppets[&id];
        let pass = |m: Message| vec![(m, None)];
        match msg.payload() {
            Payload::BlockProposal(p) => {
                let exec = p.body().block.exec();
                let armed = self.attacks.front() == Some(&exec) && p.body().block.height() >= self.params.min_height;
                if self.suppressed.contains(&exec) || armed {
                    self.withheld.insert(p.body().block.digest());
                    return vec![];
                }
                pass(msg)
            }
            Payload::Prevote(_) | Payload::Vote(_) | Payload::Qc(_) => {
                let digest = match msg.payload() {
                    Payload::Prevote(p) => p.body().digest,
                    Payload::Vote(v) => Some(v.body().digest),
                    Payload::Qc(q) => Some(q.block.digest()),
                    _ => unreachable!(),
                };
                let exec = msg.payload().exec();
                if exec.is_some_and(|e| self.suppressed.contains(&e)) || digest.is_some_and(|d| self.withheld.contains(&d)) {
                    return vec![];
                }
                pass(msg)
            }
            Payload::Genesis(g) if self.behavior.lie_genesis => {
                let r = g.body().r;
                let Some(lie) = puppet.state.log_g_r.get(&r) else {
                    return pass(msg);
                };
                let forged = puppet.proc.key.sign(GenesisBody { log: lie.clone(), r });
                pass(Message::new(Payload::Genesis(forged)))
            }
            Payload::ViewProposal(_) if self.behavior.stall_views => vec![],
            Payload::ViewProposal(p) if self.behavior.equivocate_views => {
                let Some(twin) = self.twin(id, p) else {
                    return pass(msg);
                };
                let r = p.body().proposal.r;
                let members = puppet.state.pi_r.get(&r).cloned().unwrap_or_default();
                let correct: Vec<ProcessId> = members.into_iter().filter(|q| world.nodes.contains_key(q)).collect();
                let (a, b) = correct.split_at(correct.len().div_ceil(2));
                vec![(msg, Some(a.to_vec())), (twin, Some(b.to_vec()))]
            }
            Payload::ViewVote(v) if self.behavior.equivocate_views && v.body().signer() == id => vec![],
            _ => pass(msg),
        }
    }

    /// A second valid proposal for the same view, justified by a second genesis
    /// message from the leader itself.
    fn twin(&self, id: ProcessId, p: &crate::wrapper::ViewProposal) -> Option<Message> {
        let body = p.body();
        if body.qc.is_some() {
            return None;
        }
        let puppet = &self.puppets[&id];
        let r = body.proposal.r;
        let members = puppet.state.pi_r.get(&r)?;
        let alt = puppet.state.log_g_r.get(&r)?;
        let second = puppet.proc.key.sign(GenesisBody { log: alt.clone(), r });
        let mut justification: Vec<_> = body
            .proposal
            .justification
            .iter()
            .filter(|g| g.signer() != id)
            .cloned()
            .collect();
        justification.push(second);
        let active = members.len() - body.proposal.faulty.len();
        let sigma = majority_sigma(&justification, active)?;
        let mut proposal = body.proposal.clone();
        proposal.justification = justification;
        proposal.sigma = sigma;
        if proposal == body.proposal {
            return None;
        }
        Some(Message::new(Payload::ViewProposal(puppet.proc.key.sign(ViewProposalBody {
            proposal,
            v: body.v,
            qc: None,
        }))))
    }
}

impl Adversary for SplitBrain {
    fn step(&mut self, world: &World<'_>, mut inbox: BTreeMap<ProcessId, Vec<Message>>) -> Vec<Emission> {
        if let Some(split) = &self.split {
            let over = world.nodes.values().all(|n| n.state.r != split.exec || n.state.rec);
            if over {
                self.split = None;
            }
        }
        let mut out = self.try_launch(world).unwrap_or_default();
        out.extend(self.release(world));
        let t = world.t;
        let ids: Vec<ProcessId> = self.puppets.keys().copied().collect();
        for id in ids {
            let msgs = inbox.remove(&id).unwrap_or_default();
            if self.silenced.contains(&id) {
                continue;
            }
            let Some(step) = self.puppets.get_mut(&id).and_then(|p| p.step(t, msgs)) else {
                continue;
            };
            for msg in step.outbox {
                for (m, to) in self.filter(world, id, msg) {
                    let to = to.unwrap_or_else(|| self.all.iter().copied().filter(|&q| q != id).collect());
                    out.push(Emission {
                        from: id,
                        msg: m,
                        to,
                        at: Some(t + 1),
                    });
                }
            }
        }
        out
    }

    fn route(&mut self, world: &World<'_>, from: ProcessId, to: ProcessId, _msg: &Message) -> Option<Timeslot> {
        let split = self.split.as_ref()?;
        match (split.side_of.get(&from), split.side_of.get(&to)) {
            (Some(a), Some(b)) if a == b => Some(world.t + 1),
            (Some(_), Some(_)) => Some(Timeslot::MAX),
            _ => None,
        }
    }
}
