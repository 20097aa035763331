//! Random message sets over a small block tree, and the exhaustive definitions
//! the detectors are checked against.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use smr_recovery::base::{finalize_fn, Block, BlockQc, Instance, VoteBody};
use smr_recovery::crypto::{Keychain, SigningKey};
use smr_recovery::wrapper::RProposal;
use smr_recovery::{global_f, Log, Message, MessageSet, Payload, ProcessId, Transaction};

pub const MEMBERS: u16 = 4;

pub fn keys() -> Vec<SigningKey> {
    let mut chain = Keychain::new();
    // One outsider beyond the members.
    (1..=MEMBERS + 1).map(|i| chain.issue(ProcessId(i)).unwrap()).collect()
}

pub fn members() -> BTreeSet<ProcessId> {
    (1..=MEMBERS).map(ProcessId).collect()
}

pub fn instance() -> Instance {
    Instance::new(1, members(), Log::empty())
}

/// One certificate-to-be: a block hanging off an earlier one (or the genesis)
/// and the signers of its votes, given as a bit mask over all keys.
#[derive(Clone, Debug)]
pub struct QcSpec {
    pub parent: Option<usize>,
    pub tx: u8,
    pub proposer: u16,
    pub signers: u8,
}

pub fn tx(i: u8) -> Transaction {
    Transaction::new(vec![b'a' + i])
}

/// Builds the blocks in order; a parent index always points backwards.
pub fn build(specs: &[QcSpec], keys: &[SigningKey]) -> Vec<Message> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut out = Vec::new();
    for s in specs {
        let parent = s.parent.filter(|&p| p < blocks.len()).map(|p| &blocks[p]);
        let height = parent.map_or(1, |p| p.height() + 1);
        let block = Block::new(height, parent.map(Block::digest), vec![tx(s.tx)], ProcessId(s.proposer), 1);
        let votes = keys
            .iter()
            .enumerate()
            .filter(|(i, _)| s.signers >> i & 1 == 1)
            .map(|(_, k)| {
                k.sign(VoteBody {
                    exec: 1,
                    height,
                    digest: block.digest(),
                })
            })
            .collect();
        out.push(Message::new(Payload::Qc(BlockQc {
            block: block.clone(),
            votes,
        })));
        blocks.push(block);
    }
    out
}

pub fn random_specs<R: Rng>(rng: &mut R, len: usize) -> Vec<QcSpec> {
    (0..len)
        .map(|i| QcSpec {
            parent: if i == 0 || rng.gen_bool(0.4) { None } else { Some(rng.gen_range(0..i)) },
            tx: rng.gen_range(0..3),
            proposer: rng.gen_range(1..=MEMBERS),
            // Mostly valid quorums, sometimes short or with the outsider.
            signers: if rng.gen_bool(0.8) { 0b0111 << rng.gen_range(0..2) } else { rng.gen_range(0..32) },
        })
        .collect()
}

/// Finish votes moving execution 1 to execution 2 without process 1.
pub fn finish_votes(keys: &[SigningKey], sigma: &[u8], signers: &[usize]) -> Vec<Message> {
    let p = RProposal {
        faulty: [ProcessId(1)].into(),
        sigma: Log::from_txs(sigma.iter().map(|&i| tx(i))),
        justification: vec![],
        r: 1,
    };
    signers
        .iter()
        .map(|&i| Message::new(Payload::FinishVote(keys[i].sign(p.clone()))))
        .collect()
}

pub fn subset(msgs: &[Message], mask: u32) -> MessageSet {
    (0..msgs.len()).filter(|i| mask >> i & 1 == 1).map(|i| msgs[i].clone()).collect()
}

/// Whether some `M₀ ⊂ M₁ ⊆ msgs` has `F(M₀) ⋠ F(M₁)`, by enumeration.
pub fn has_violation_brute(inst: &Instance, msgs: &[Message]) -> bool {
    let n = msgs.len();
    let logs: Vec<Log> = (0u32..1 << n).map(|m| finalize_fn(inst, &subset(msgs, m))).collect();
    (0u32..1 << n).any(|m1| {
        let mut m0 = m1;
        while m0 != 0 {
            m0 = (m0 - 1) & m1;
            if !logs[m0 as usize].is_prefix_of(&logs[m1 as usize]) {
                return true;
            }
        }
        false
    })
}

/// Longest `M_{t_0} ⊂ ... ⊂ M_{t_r}` drawn from `chain` whose logs each fail
/// to extend the previous one, by enumerating every subsequence.
pub fn count_violations_brute(chain: &[MessageSet]) -> usize {
    let logs: Vec<Log> = chain.iter().map(|m| global_f(m, &members(), &Log::empty()).log).collect();
    let n = chain.len();
    let mut best = 0;
    for mask in 1u32..1 << n {
        let picked: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let strict = picked.windows(2).all(|w| chain[w[0]].len() < chain[w[1]].len());
        let breaks = picked.windows(2).all(|w| !logs[w[0]].is_prefix_of(&logs[w[1]]));
        if strict && breaks {
            best = best.max(picked.len() - 1);
        }
    }
    best
}

/// The growing prefixes of a random insertion order of `msgs`.
pub fn random_chain<R: Rng>(rng: &mut R, msgs: &[Message]) -> Vec<MessageSet> {
    let mut order = msgs.to_vec();
    order.shuffle(rng);
    let mut cur = MessageSet::new();
    let mut chain = vec![cur.clone()];
    for m in order {
        cur.insert(m);
        chain.push(cur.clone());
    }
    chain
}
