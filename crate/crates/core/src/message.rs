//! Protocol messages and indexed message sets.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::base::finalize::TreeCache;
use crate::base::{BlockProposal, BlockQc, BlockVote, ExecId, Prevote};
use crate::crypto::Signed;
use crate::types::{Digest, ProcessId, Transaction};
use crate::wrapper::{FinishVote, GenesisMessage, ViewProposal, ViewVote};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum Payload {
    Tx(Transaction),
    BlockProposal(Signed<BlockProposal>),
    Prevote(Signed<Prevote>),
    Vote(BlockVote),
    Qc(BlockQc),
    Genesis(GenesisMessage),
    ViewProposal(ViewProposal),
    ViewVote(ViewVote),
    FinishVote(FinishVote),
}

impl Payload {
    /// The execution tag of base-protocol traffic.
    pub fn exec(&self) -> Option<ExecId> {
        match self {
            Payload::BlockProposal(p) => Some(p.body().block.exec()),
            Payload::Prevote(p) => Some(p.body().exec),
            Payload::Vote(v) => Some(v.body().exec),
            Payload::Qc(q) => Some(q.block.exec()),
            _ => None,
        }
    }

    /// Outer signer, if the message is signed.
    pub fn signer(&self) -> Option<ProcessId> {
        match self {
            Payload::Tx(_) | Payload::Qc(_) => None,
            Payload::BlockProposal(s) => Some(s.signer()),
            Payload::Prevote(s) => Some(s.signer()),
            Payload::Vote(s) => Some(s.signer()),
            Payload::Genesis(s) => Some(s.signer()),
            Payload::ViewProposal(s) => Some(s.signer()),
            Payload::ViewVote(s) => Some(s.signer()),
            Payload::FinishVote(s) => Some(s.signer()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Tx(_) => "tx",
            Payload::BlockProposal(_) => "block_proposal",
            Payload::Prevote(_) => "prevote",
            Payload::Vote(_) => "vote",
            Payload::Qc(_) => "qc",
            Payload::Genesis(_) => "genesis",
            Payload::ViewProposal(_) => "view_proposal",
            Payload::ViewVote(_) => "view_vote",
            Payload::FinishVote(_) => "finish_vote",
        }
    }

    /// Calls `f(signer, digest)` for every signed value in the message, nested
    /// ones included.
    pub fn visit_signatures(&self, f: &mut dyn FnMut(ProcessId, Digest)) {
        fn view_proposal(p: &ViewProposal, f: &mut dyn FnMut(ProcessId, Digest)) {
            f(p.signer(), p.digest());
            for g in &p.body().proposal.justification {
                f(g.signer(), g.digest());
            }
            if let Some(qc) = &p.body().qc {
                view_proposal(&qc.target, f);
                for v in &qc.votes {
                    f(v.signer(), v.digest());
                    view_proposal(v.body(), f);
                }
            }
        }
        match self {
            Payload::Tx(_) => {}
            Payload::BlockProposal(s) => f(s.signer(), s.digest()),
            Payload::Prevote(s) => f(s.signer(), s.digest()),
            Payload::Vote(s) => f(s.signer(), s.digest()),
            Payload::Qc(q) => q.votes.iter().for_each(|v| f(v.signer(), v.digest())),
            Payload::Genesis(s) => f(s.signer(), s.digest()),
            Payload::ViewProposal(p) => view_proposal(p, f),
            Payload::ViewVote(v) => {
                f(v.signer(), v.digest());
                view_proposal(v.body(), f);
            }
            Payload::FinishVote(s) => {
                f(s.signer(), s.digest());
                for g in &s.body().justification {
                    f(g.signer(), g.digest());
                }
            }
        }
    }
}

/// A message with its digest cached. Equality and order are by digest.
#[derive(Clone, Debug)]
pub struct Message {
    digest: Digest,
    payload: Arc<Payload>,
}

impl Message {
    pub fn new(payload: Payload) -> Self {
        Message {
            digest: Digest::of(&payload),
            payload: Arc::new(payload),
        }
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }
}

impl From<Payload> for Message {
    fn from(p: Payload) -> Self {
        Message::new(p)
    }
}

impl PartialEq for Message {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}
impl Eq for Message {}
impl PartialOrd for Message {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Message {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.digest.cmp(&other.digest)
    }
}

impl Serialize for Message {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.payload.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Message {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Payload::deserialize(d).map(Message::new)
    }
}

/// Base-protocol messages of one execution.
#[derive(Clone, Debug, Default)]
pub struct ExecMessages {
    pub proposals: Vec<Signed<BlockProposal>>,
    pub prevotes: Vec<Signed<Prevote>>,
    pub votes: Vec<BlockVote>,
    pub qcs: Vec<BlockQc>,
}

impl ExecMessages {
    /// Binding votes, including those carried inside certificates.
    pub fn all_votes(&self) -> impl Iterator<Item = &BlockVote> {
        self.votes
            .iter()
            .chain(self.qcs.iter().flat_map(|q| q.votes.iter()))
    }
}

/// A set of messages, indexed by kind and execution tag. Insertion order of
/// transactions is kept since proposers use it to order pending transactions.
#[derive(Clone, Debug, Default)]
pub struct MessageSet {
    all: BTreeMap<Digest, Message>,
    txs: Vec<Transaction>,
    tx_seen: BTreeSet<Transaction>,
    base: BTreeMap<ExecId, ExecMessages>,
    genesis: BTreeMap<u32, Vec<GenesisMessage>>,
    view_proposals: BTreeMap<u32, Vec<ViewProposal>>,
    view_votes: BTreeMap<u32, Vec<ViewVote>>,
    finish_votes: BTreeMap<u32, Vec<FinishVote>>,
    finish_digests: BTreeMap<u32, Vec<Digest>>,
    trees: TreeCache,
}

static EMPTY_EXEC: ExecMessages = ExecMessages {
    proposals: Vec::new(),
    prevotes: Vec::new(),
    votes: Vec::new(),
    qcs: Vec::new(),
};

impl MessageSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when the message was not yet present.
    pub fn insert(&mut self, msg: Message) -> bool {
        if self.all.contains_key(&msg.digest) {
            return false;
        }
        match msg.payload() {
            Payload::Tx(tx) => {
                if self.tx_seen.insert(tx.clone()) {
                    self.txs.push(tx.clone());
                }
            }
            Payload::BlockProposal(p) => self
                .base
                .entry(p.body().block.exec())
                .or_default()
                .proposals
                .push(p.clone()),
            Payload::Prevote(p) => self
                .base
                .entry(p.body().exec)
                .or_default()
                .prevotes
                .push(p.clone()),
            Payload::Vote(v) => self
                .base
                .entry(v.body().exec)
                .or_default()
                .votes
                .push(v.clone()),
            Payload::Qc(q) => self
                .base
                .entry(q.block.exec())
                .or_default()
                .qcs
                .push(q.clone()),
            Payload::Genesis(g) => self.genesis.entry(g.body().r).or_default().push(g.clone()),
            Payload::ViewProposal(p) => self
                .view_proposals
                .entry(p.body().proposal.r)
                .or_default()
                .push(p.clone()),
            Payload::ViewVote(v) => self
                .view_votes
                .entry(v.body().body().proposal.r)
                .or_default()
                .push(v.clone()),
            Payload::FinishVote(v) => {
                let r = v.body().r;
                self.finish_votes.entry(r).or_default().push(v.clone());
                self.finish_digests
                    .entry(r)
                    .or_default()
                    .push(v.body().digest());
            }
        }
        self.all.insert(msg.digest, msg);
        true
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.all.contains_key(digest)
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Message> {
        self.all.values()
    }

    pub fn txs(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn exec(&self, exec: ExecId) -> &ExecMessages {
        self.base.get(&exec).unwrap_or(&EMPTY_EXEC)
    }

    pub fn genesis(&self, r: u32) -> &[GenesisMessage] {
        self.genesis.get(&r).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn view_proposals(&self, r: u32) -> &[ViewProposal] {
        self.view_proposals.get(&r).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn view_votes(&self, r: u32) -> &[ViewVote] {
        self.view_votes.get(&r).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn finish_votes(&self, r: u32) -> &[FinishVote] {
        self.finish_votes.get(&r).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Finish votes of recovery `r` paired with the digest of their proposal.
    pub fn finish_votes_by_digest(&self, r: u32) -> impl Iterator<Item = (Digest, &FinishVote)> {
        let digests = self.finish_digests.get(&r).map(Vec::as_slice).unwrap_or(&[]);
        digests.iter().copied().zip(self.finish_votes(r))
    }

    pub(crate) fn trees(&self) -> &TreeCache {
        &self.trees
    }

    pub fn is_subset_of(&self, other: &MessageSet) -> bool {
        self.all.keys().all(|d| other.all.contains_key(d))
    }
}

impl FromIterator<Message> for MessageSet {
    fn from_iter<I: IntoIterator<Item = Message>>(iter: I) -> Self {
        let mut set = MessageSet::new();
        for m in iter {
            set.insert(m);
        }
        set
    }
}

impl Extend<Message> for MessageSet {
    fn extend<I: IntoIterator<Item = Message>>(&mut self, iter: I) {
        for m in iter {
            self.insert(m);
        }
    }
}
