//! Builders for hand-made message sets in unit tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::base::{Block, BlockQc, BlockVote, ExecId, VoteBody};
use crate::crypto::{Keychain, SigningKey};
use crate::message::{Message, MessageSet, Payload};
use crate::types::{ProcessId, Transaction};

pub struct Keys(BTreeMap<ProcessId, SigningKey>);

impl Keys {
    pub fn new(n: u16) -> Self {
        let mut chain = Keychain::new();
        Keys((1..=n).map(|i| (ProcessId(i), chain.issue(ProcessId(i)).unwrap())).collect())
    }

    pub fn get(&self, p: u16) -> &SigningKey {
        &self.0[&ProcessId(p)]
    }
}

pub fn pids(ids: &[u16]) -> BTreeSet<ProcessId> {
    ids.iter().map(|&i| ProcessId(i)).collect()
}

pub fn txs(names: &[&str]) -> Vec<Transaction> {
    names.iter().map(|s| Transaction::new(s.as_bytes())).collect()
}

pub fn block(exec: ExecId, parent: Option<&Block>, names: &[&str], proposer: u16) -> Block {
    let height = parent.map_or(1, |p| p.height() + 1);
    Block::new(height, parent.map(Block::digest), txs(names), ProcessId(proposer), exec)
}

pub fn vote(keys: &Keys, signer: u16, block: &Block) -> BlockVote {
    keys.get(signer).sign(VoteBody {
        exec: block.exec(),
        height: block.height(),
        digest: block.digest(),
    })
}

pub fn qc(keys: &Keys, block: &Block, signers: &[u16]) -> BlockQc {
    BlockQc {
        block: block.clone(),
        votes: signers.iter().map(|&s| vote(keys, s, block)).collect(),
    }
}

pub fn set(payloads: impl IntoIterator<Item = Payload>) -> MessageSet {
    payloads.into_iter().map(Message::new).collect()
}
