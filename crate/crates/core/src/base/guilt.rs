//! Proofs of guilt: pairs of conflicting binding votes.

use std::collections::{BTreeMap, BTreeSet};

use crate::message::MessageSet;
use crate::types::{Digest, ProcessId};

use super::{BlockVote, GuiltProof, Instance};

/// One proof per member of `Π'` that cast two binding votes for distinct blocks
/// at the same height of this execution. Votes embedded in certificates count.
pub fn extract_guilt(inst: &Instance, msgs: &MessageSet) -> Vec<GuiltProof> {
    let mut seen: BTreeMap<(ProcessId, u64), BTreeMap<Digest, &BlockVote>> = BTreeMap::new();
    for vote in msgs.exec(inst.exec).all_votes() {
        let body = vote.body();
        if body.exec != inst.exec || !inst.is_member(vote.signer()) {
            continue;
        }
        seen.entry((vote.signer(), body.height))
            .or_default()
            .entry(body.digest)
            .or_insert(vote);
    }
    let mut proofs: BTreeMap<ProcessId, GuiltProof> = BTreeMap::new();
    for ((culprit, _), by_digest) in seen {
        if by_digest.len() < 2 || proofs.contains_key(&culprit) {
            continue;
        }
        let mut votes = by_digest.into_values();
        let first = votes.next().cloned().expect("two votes");
        let second = votes.next().cloned().expect("two votes");
        proofs.insert(
            culprit,
            GuiltProof {
                culprit,
                first,
                second,
            },
        );
    }
    proofs.into_values().collect()
}

/// The culprits of [`extract_guilt`].
pub fn guilty_set(inst: &Instance, msgs: &MessageSet) -> BTreeSet<ProcessId> {
    extract_guilt(inst, msgs).into_iter().map(|p| p.culprit).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log::Log;
    use crate::message::Payload;
    use crate::testkit::{block, pids, qc, set, vote, Keys};

    #[test]
    fn conflicting_votes_prove_guilt() {
        let k = Keys::new(5);
        let inst = Instance::new(1, pids(&[1, 2, 3, 4]), Log::empty());
        let x = block(1, None, &["a"], 1);
        let y = block(1, None, &["b"], 1);
        let m = set([
            // 1 votes twice directly, 2 once directly and once inside a QC.
            Payload::Vote(vote(&k, 1, &x)),
            Payload::Vote(vote(&k, 1, &y)),
            Payload::Vote(vote(&k, 2, &x)),
            Payload::Qc(qc(&k, &y, &[2, 3, 4])),
            // 3 votes for the same block twice: no conflict.
            Payload::Vote(vote(&k, 3, &y)),
            // 5 is not a member.
            Payload::Vote(vote(&k, 5, &x)),
            Payload::Vote(vote(&k, 5, &y)),
        ]);
        let proofs = extract_guilt(&inst, &m);
        assert!(proofs.iter().all(GuiltProof::is_well_formed));
        assert_eq!(guilty_set(&inst, &m), pids(&[1, 2]));
    }

    #[test]
    fn different_heights_and_executions_are_not_evidence() {
        let k = Keys::new(4);
        let inst = Instance::new(1, pids(&[1, 2, 3, 4]), Log::empty());
        let x = block(1, None, &["a"], 1);
        let x2 = block(1, Some(&x), &["b"], 1);
        let other = block(2, None, &["c"], 1);
        let m = set([
            Payload::Vote(vote(&k, 1, &x)),
            Payload::Vote(vote(&k, 1, &x2)),
            Payload::Vote(vote(&k, 1, &other)),
        ]);
        assert!(guilty_set(&inst, &m).is_empty());
    }

    #[test]
    fn malformed_proofs_are_rejected() {
        let k = Keys::new(2);
        let x = block(1, None, &["a"], 1);
        let y = block(1, None, &["b"], 1);
        let proof = GuiltProof {
            culprit: ProcessId(1),
            first: vote(&k, 1, &x),
            second: vote(&k, 2, &y),
        };
        assert!(!proof.is_well_formed());
        let same = GuiltProof {
            culprit: ProcessId(1),
            first: vote(&k, 1, &x),
            second: vote(&k, 1, &x),
        };
        assert!(!same.is_well_formed());
    }
}
