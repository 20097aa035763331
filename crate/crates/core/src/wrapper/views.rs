//! Recovery views: leaders, proposals, QCs, equivocation and finish-QCs.
//!
//! Everything here is a pure function of a message set and the recovery
//! parameters, so the same code serves the wrapper and client-side audits.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::base::{guilty_set, Instance};
use crate::crypto::SigningKey;
use crate::log::Log;
use crate::message::MessageSet;
use crate::perm::{induced_permutation, Permutation, PermutationError};
use crate::types::{Digest, ProcessId};

use super::types::{
    view_of, FinishQc, FinishVote, GenesisMessage, QuorumCert, RProposal, ViewIndex, ViewProposal,
    ViewProposalBody, ViewVote,
};

/// What a process knows about the `r`-th recovery when judging its messages.
#[derive(Clone, Copy, Debug)]
pub struct RecoveryView<'a> {
    pub r: u32,
    pub pi_r: &'a BTreeSet<ProcessId>,
    pub log_g_r: &'a Log,
    pub pi_star: &'a Permutation,
    /// Consistency resilience `ρ_C` as `(numerator, denominator)`.
    pub rho_c: (u32, u32),
}

impl RecoveryView<'_> {
    /// The base-protocol instance of execution `E_r`.
    pub fn instance(&self) -> Instance {
        Instance::new(self.r, self.pi_r.iter().copied(), self.log_g_r.clone())
    }

    pub fn lead(&self, v: u32) -> Result<ProcessId, PermutationError> {
        lead(v, self.pi_star, self.pi_r)
    }
}

/// `lead(r, v) = Π*_r(v)`.
pub fn lead(
    v: u32,
    pi_star: &Permutation,
    pi_r: &BTreeSet<ProcessId>,
) -> Result<ProcessId, PermutationError> {
    induced_permutation(pi_star, pi_r)?.at(v as usize)
}

/// Strictly more than half of `active`.
pub fn is_majority(count: usize, active: usize) -> bool {
    2 * count > active
}

fn active_count(pi_r: &BTreeSet<ProcessId>, faulty: &BTreeSet<ProcessId>) -> usize {
    pi_r.iter().filter(|p| !faulty.contains(p)).count()
}

fn is_active(p: ProcessId, pi_r: &BTreeSet<ProcessId>, faulty: &BTreeSet<ProcessId>) -> bool {
    pi_r.contains(&p) && !faulty.contains(&p)
}

/// The longest sequence extended by more than `active / 2` of `genesis`, if any
/// sequence (even the empty one) has that much support.
pub fn majority_sigma(genesis: &[GenesisMessage], active: usize) -> Option<Log> {
    let support = |len: usize, of: &Log| {
        genesis
            .iter()
            .filter(|g| {
                let l = &g.body().log;
                l.len() >= len && l.entries()[..len] == of.entries()[..len]
            })
            .count()
    };
    let mut best: Option<Log> = None;
    for g in genesis {
        let log = &g.body().log;
        // Support only shrinks as the prefix grows, so scan down from the top.
        let found = (0..=log.len())
            .rev()
            .find(|&len| is_majority(support(len, log), active));
        if let Some(len) = found {
            if best.as_ref().is_none_or(|b| len > b.len()) {
                best = Some(log.truncated(len));
            }
        }
    }
    best
}

/// Every `(r, v)`-proposal in `msgs`, including those only present inside votes
/// or inside QCs carried by later proposals, by digest.
pub fn known_view_proposals(msgs: &MessageSet, r: u32) -> BTreeMap<Digest, ViewProposal> {
    fn add(p: &ViewProposal, r: u32, out: &mut BTreeMap<Digest, ViewProposal>) {
        if p.body().proposal.r != r {
            return;
        }
        if out.insert(p.digest(), p.clone()).is_none() {
            if let Some(qc) = &p.body().qc {
                add(&qc.target, r, out);
                for v in &qc.votes {
                    add(v.body(), r, out);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    for p in msgs.view_proposals(r) {
        add(p, r, &mut out);
    }
    for v in msgs.view_votes(r) {
        add(v.body(), r, &mut out);
    }
    out
}

/// Whether `msgs` holds two distinct `(r, v)`-proposals signed by `leader`.
pub fn detect_equivocation(msgs: &MessageSet, r: u32, v: u32, leader: ProcessId) -> bool {
    known_view_proposals(msgs, r)
        .values()
        .filter(|p| p.body().v == v && p.signer() == leader)
        .nth(1)
        .is_some()
}

/// A QC is valid if all of its votes re-sign its target, come from distinct
/// members of `Π_r − F` and outnumber half of `|Π_r − F|`.
pub fn qc_is_valid(qc: &QuorumCert, pi_r: &BTreeSet<ProcessId>) -> bool {
    let faulty = &qc.proposal().faulty;
    let mut signers = BTreeSet::new();
    for vote in &qc.votes {
        if vote.body() != &qc.target || !is_active(vote.signer(), pi_r, faulty) {
            return false;
        }
        signers.insert(vote.signer());
    }
    is_majority(signers.len(), active_count(pi_r, faulty))
}

/// Valid QCs that can be assembled from the `r`-votes in `msgs`, one per target,
/// ordered by view and then target digest. Votes carried inside proposals count.
pub fn assemble_qcs(msgs: &MessageSet, r: u32, pi_r: &BTreeSet<ProcessId>) -> Vec<QuorumCert> {
    let mut by_target: BTreeMap<(ViewIndex, Digest), BTreeMap<ProcessId, ViewVote>> = BTreeMap::new();
    let mut note = |vote: &ViewVote| {
        let target = vote.body();
        let faulty = &target.body().proposal.faulty;
        if target.body().proposal.r == r && is_active(vote.signer(), pi_r, faulty) {
            by_target
                .entry((view_of(target), target.digest()))
                .or_default()
                .entry(vote.signer())
                .or_insert_with(|| vote.clone());
        }
    };
    for vote in msgs.view_votes(r) {
        note(vote);
    }
    for p in msgs.view_proposals(r) {
        let mut qc = p.body().qc.as_deref();
        while let Some(q) = qc {
            q.votes.iter().for_each(&mut note);
            qc = q.target.body().qc.as_deref();
        }
    }
    by_target
        .into_values()
        .filter_map(|votes| {
            let target = votes.values().next()?.body().clone();
            let qc = QuorumCert {
                target,
                votes: votes.into_values().collect(),
            };
            qc_is_valid(&qc, pi_r).then_some(qc)
        })
        .collect()
}

/// Proposals of recovery `r` with a valid finish-QC in `msgs`, smallest digest
/// first.
pub fn finish_qcs(msgs: &MessageSet, r: u32, pi_r: &BTreeSet<ProcessId>) -> Vec<FinishQc> {
    let mut by_proposal: BTreeMap<Digest, (RProposal, BTreeMap<ProcessId, FinishVote>)> = BTreeMap::new();
    for (digest, vote) in msgs.finish_votes_by_digest(r) {
        let p = vote.body();
        if p.r != r || !is_active(vote.signer(), pi_r, &p.faulty) {
            continue;
        }
        by_proposal
            .entry(digest)
            .or_insert_with(|| (p.clone(), BTreeMap::new()))
            .1
            .entry(vote.signer())
            .or_insert_with(|| vote.clone());
    }
    by_proposal
        .into_values()
        .filter(|(p, votes)| is_majority(votes.len(), active_count(pi_r, &p.faulty)))
        .map(|(proposal, votes)| FinishQc {
            proposal,
            votes: votes.into_values().collect(),
        })
        .collect()
}

/// The first failed validity condition of an `(r, v)`-proposal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum InvalidProposal {
    #[error("Π_r or log_G_r undefined")]
    Undefined,
    #[error("F is not a proper subset of Π_r of size at least ρ_C·|Π_r|")]
    FaultySetSize,
    #[error("missing proof of guilt for a member of F")]
    UnprovenGuilt,
    #[error("justification is not one genesis message per active signer")]
    BadJustification,
    #[error("justification omits a process of P_i(r)")]
    MissingGenesis,
    #[error("σ is not the majority-extended sequence")]
    WrongSigma,
    #[error("signer is not lead(r, v)")]
    WrongLeader,
    #[error("proposal conflicts with the lock")]
    Lock,
    #[error("equivocation detected in this view")]
    Equivocation,
}

/// Local knowledge of `p_i` that validity depends on beyond the message set.
#[derive(Clone, Copy, Debug)]
pub struct Judge<'a> {
    pub view: Option<RecoveryView<'a>>,
    pub msgs: &'a MessageSet,
    pub p_i_r: Option<&'a BTreeSet<ProcessId>>,
    pub q_plus: Option<&'a QuorumCert>,
}

impl Judge<'_> {
    /// Checks every validity condition in order and reports the first that fails.
    pub fn check(&self, proposal: &ViewProposal) -> Result<(), InvalidProposal> {
        let view = self.view.ok_or(InvalidProposal::Undefined)?;
        let body = proposal.body();
        let p = &body.proposal;
        if p.r != view.r {
            return Err(InvalidProposal::Undefined);
        }
        let pi_r = view.pi_r;
        let (num, den) = view.rho_c;
        let proper = p.faulty.len() < pi_r.len() && p.faulty.is_subset(pi_r);
        if !proper || (p.faulty.len() as u64) * (den as u64) < (num as u64) * (pi_r.len() as u64) {
            return Err(InvalidProposal::FaultySetSize);
        }
        let guilty = guilty_set(&view.instance(), self.msgs);
        if !p.faulty.is_subset(&guilty) {
            return Err(InvalidProposal::UnprovenGuilt);
        }
        let mut signers = BTreeSet::new();
        for g in &p.justification {
            if g.body().r != view.r
                || !is_active(g.signer(), pi_r, &p.faulty)
                || !signers.insert(g.signer())
            {
                return Err(InvalidProposal::BadJustification);
            }
        }
        match self.p_i_r {
            Some(expected) if expected.is_subset(&signers) => {}
            _ => return Err(InvalidProposal::MissingGenesis),
        }
        let active = active_count(pi_r, &p.faulty);
        if majority_sigma(&p.justification, active).as_ref() != Some(&p.sigma) {
            return Err(InvalidProposal::WrongSigma);
        }
        let leader = view.lead(body.v).map_err(|_| InvalidProposal::WrongLeader)?;
        if proposal.signer() != leader {
            return Err(InvalidProposal::WrongLeader);
        }
        if let Some(lock) = self.q_plus {
            let ok = body.qc.as_deref().is_some_and(|q| {
                q.view().r == view.r
                    && q.view().v < body.v
                    && qc_is_valid(q, pi_r)
                    && q.view() >= lock.view()
                    && q.proposal() == p
            });
            if !ok {
                return Err(InvalidProposal::Lock);
            }
        }
        if detect_equivocation(self.msgs, view.r, body.v, leader) {
            return Err(InvalidProposal::Equivocation);
        }
        Ok(())
    }

    pub fn is_valid(&self, proposal: &ViewProposal) -> bool {
        self.check(proposal).is_ok()
    }
}

/// The proposal a leader of view `(r, v)` sends, per `Makeproposal`. `None` when
/// no sequence has majority support among the usable genesis messages.
pub fn make_proposal(
    view: &RecoveryView<'_>,
    v: u32,
    msgs: &MessageSet,
    key: &SigningKey,
) -> Option<ViewProposal> {
    let carried = assemble_qcs(msgs, view.r, view.pi_r)
        .into_iter()
        .filter(|q| q.view().v < v)
        .max_by_key(|q| q.view().v);
    if let Some(qc) = carried {
        let proposal = qc.proposal().clone();
        return Some(key.sign(ViewProposalBody {
            proposal,
            v,
            qc: Some(Box::new(qc)),
        }));
    }
    let faulty: BTreeSet<ProcessId> = guilty_set(&view.instance(), msgs)
        .intersection(view.pi_r)
        .copied()
        .collect();
    let mut one_each: BTreeMap<ProcessId, GenesisMessage> = BTreeMap::new();
    for g in msgs.genesis(view.r) {
        if is_active(g.signer(), view.pi_r, &faulty) {
            let slot = one_each.entry(g.signer()).or_insert_with(|| g.clone());
            if g.digest() < slot.digest() {
                *slot = g.clone();
            }
        }
    }
    let justification: Vec<GenesisMessage> = one_each.into_values().collect();
    let sigma = majority_sigma(&justification, active_count(view.pi_r, &faulty))?;
    Some(key.sign(ViewProposalBody {
        proposal: RProposal {
            faulty,
            sigma,
            justification,
            r: view.r,
        },
        v,
        qc: None,
    }))
}
