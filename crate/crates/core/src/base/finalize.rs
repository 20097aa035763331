//! The finalization function `F(Π', log_G')` of the base protocol and the
//! consistency-violation detector built on it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::log::Log;
use crate::message::MessageSet;
use crate::types::{Digest, Transaction};

use super::{Block, BlockQc, ExecId, Instance};

fn qc_is_valid(inst: &Instance, qc: &BlockQc) -> bool {
    let block = &qc.block;
    if block.exec() != inst.exec || block.height() == 0 {
        return false;
    }
    let mut signers = BTreeSet::new();
    for vote in &qc.votes {
        let body = vote.body();
        if body.exec != inst.exec
            || body.height != block.height()
            || body.digest != block.digest()
            || !inst.is_member(vote.signer())
        {
            return false;
        }
        signers.insert(vote.signer());
    }
    signers.len() >= inst.quorum()
}

/// Blocks carrying a valid certificate in `msgs`, by digest.
pub fn valid_qcs<'a>(inst: &Instance, msgs: &'a MessageSet) -> BTreeMap<Digest, &'a Block> {
    let mut out = BTreeMap::new();
    for qc in &msgs.exec(inst.exec).qcs {
        let digest = qc.block.digest();
        if !out.contains_key(&digest) && qc_is_valid(inst, qc) {
            out.insert(digest, &qc.block);
        }
    }
    out
}

/// Certified blocks reachable from genesis through certified parents, as a tree
/// keyed by parent (`None` is the genesis). Children are sorted by digest.
#[derive(Debug)]
struct CertifiedTree {
    children: BTreeMap<Option<Digest>, Vec<Block>>,
}

impl CertifiedTree {
    fn build(inst: &Instance, msgs: &MessageSet) -> Self {
        let certified = valid_qcs(inst, msgs);
        let mut by_parent: BTreeMap<Option<Digest>, Vec<&Block>> = BTreeMap::new();
        for block in certified.values() {
            by_parent.entry(block.parent()).or_default().push(block);
        }
        // Keep only what hangs off the genesis with consistent heights.
        let mut children: BTreeMap<Option<Digest>, Vec<Block>> = BTreeMap::new();
        let mut stack: Vec<(Option<Digest>, u64)> = vec![(None, 0)];
        while let Some((parent, height)) = stack.pop() {
            let Some(kids) = by_parent.get(&parent) else {
                continue;
            };
            let mut kept: Vec<Block> = kids
                .iter()
                .filter(|b| b.height() == height + 1)
                .map(|b| (*b).clone())
                .collect();
            kept.sort_by_key(|b| b.digest());
            for b in &kept {
                stack.push((Some(b.digest()), b.height()));
            }
            if !kept.is_empty() {
                children.insert(parent, kept);
            }
        }
        CertifiedTree { children }
    }

    /// The tree for `inst` over `msgs`, reusing the last one built for the same
    /// instance while no certificate of its execution has arrived since.
    fn cached(inst: &Instance, msgs: &MessageSet) -> Arc<Self> {
        let qcs = msgs.exec(inst.exec).qcs.len();
        let mut cache = msgs.trees().0.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((cached_inst, len, tree)) = cache.get(&inst.exec) {
            if *len == qcs && cached_inst == inst {
                return Arc::clone(tree);
            }
        }
        let tree = Arc::new(Self::build(inst, msgs));
        cache.insert(inst.exec, (inst.clone(), qcs, Arc::clone(&tree)));
        tree
    }

    fn children(&self, parent: Option<Digest>) -> &[Block] {
        self.children.get(&parent).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The walk of `F`: from genesis, repeatedly take the smallest-digest child.
    fn greedy_chain(&self) -> Vec<Block> {
        let mut chain = Vec::new();
        let mut cur = None;
        while let Some(next) = self.children(cur).first() {
            chain.push(next.clone());
            cur = Some(next.digest());
        }
        chain
    }

    /// Some path starting at `start` has transactions not a prefix of `bound`.
    fn escapes(&self, start: &Block, bound: &[Transaction]) -> bool {
        let mut stack: Vec<(&Block, usize)> = vec![(start, 0)];
        while let Some((block, offset)) = stack.pop() {
            let end = offset + block.txs().len();
            if end > bound.len() || bound[offset..end] != *block.txs() {
                return true;
            }
            for child in self.children(Some(block.digest())) {
                stack.push((child, end));
            }
        }
        false
    }
}

/// Memo of the last certified tree per execution, owned by a [`MessageSet`].
/// Clones start empty.
#[derive(Default)]
pub(crate) struct TreeCache(Mutex<TreeMemo>);

type TreeMemo = BTreeMap<ExecId, (Instance, usize, Arc<CertifiedTree>)>;

impl Clone for TreeCache {
    fn clone(&self) -> Self {
        TreeCache::default()
    }
}

impl fmt::Debug for TreeCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TreeCache")
    }
}

/// The blocks `F` walks through, in height order.
pub fn finalized_chain(inst: &Instance, msgs: &MessageSet) -> Vec<Block> {
    CertifiedTree::cached(inst, msgs).greedy_chain()
}

/// `F(Π', log_G')(M)`: the genesis log extended by the transactions of the
/// certified chain chosen height by height, smallest digest first.
///
/// Depends only on the contents of `msgs`, never on their arrival order.
pub fn finalize_fn(inst: &Instance, msgs: &MessageSet) -> Log {
    let chain = finalized_chain(inst, msgs);
    inst.genesis
        .extended(chain.iter().flat_map(|b| b.txs().iter().cloned()))
}

/// Whether some `M₀ ⊂ M₁ ⊆ msgs` has `F(M₀) ⋠ F(M₁)`.
///
/// Every such pair diverges at a certified block `u` (or the genesis) with two
/// certified children `c' < c`: `M₀` follows `c` and `M₁` adds `c'`. The pair is
/// a violation exactly when some path down from `c` carries transactions that are
/// not a prefix of those of `c'` alone, so that is what gets checked.
pub fn has_violation(inst: &Instance, msgs: &MessageSet) -> bool {
    let tree = CertifiedTree::cached(inst, msgs);
    tree.children.values().any(|kids| {
        kids.iter().enumerate().skip(1).any(|(j, later)| {
            kids[..j]
                .iter()
                .any(|earlier| tree.escapes(later, earlier.txs()))
        })
    })
}

/// `msgs` is a certificate for `sigma` iff `sigma ⪯ F(msgs)`.
pub fn is_certificate(inst: &Instance, msgs: &MessageSet, sigma: &Log) -> bool {
    sigma.is_prefix_of(&finalize_fn(inst, msgs))
}
