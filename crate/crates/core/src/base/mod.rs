//! The accountable base protocol `P`.
//!
//! One [`Instance`] of the protocol runs per execution `E_r`: a fixed member set,
//! a genesis log that every finalized log extends, and an execution tag carried
//! by every message so that traffic of different executions never mixes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::log::Log;
use crate::types::ProcessId;

mod block;
pub(crate) mod finalize;
mod guilt;
mod protocol;

pub use block::{Block, BlockProposal, BlockQc, BlockVote, ExecId, GuiltProof, Prevote, VoteBody};
pub use finalize::{finalize_fn, finalized_chain, has_violation, is_certificate, valid_qcs};
pub use guilt::{extract_guilt, guilty_set};
pub use protocol::{BaseConfig, BaseState};

/// The parameters `(Π', log_G')` of one execution, plus its tag.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub exec: ExecId,
    pub members: BTreeSet<ProcessId>,
    pub genesis: Log,
}

impl Instance {
    pub fn new(exec: ExecId, members: impl IntoIterator<Item = ProcessId>, genesis: Log) -> Self {
        Instance {
            exec,
            members: members.into_iter().collect(),
            genesis,
        }
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn quorum(&self) -> usize {
        quorum(self.n())
    }

    pub fn is_member(&self, p: ProcessId) -> bool {
        self.members.contains(&p)
    }
}

/// Votes needed for a block certificate among `n_prime` members.
///
/// This is the smallest threshold such that two conflicting certificates share
/// at least `⌈n'/3⌉` signers while `n' - f` correct processes still reach it for
/// every `f < n'/3`.
///
/// ```
/// use smr_recovery::base::quorum;
/// assert_eq!(quorum(4), 3);
/// assert_eq!(quorum(9), 6);
/// ```
pub fn quorum(n_prime: usize) -> usize {
    quorum_for(n_prime, 1, 3)
}

/// [`quorum`] for consistency resilience `num/den`: `⌈(n' + ⌈ρ_C·n'⌉) / 2⌉`.
pub fn quorum_for(n_prime: usize, num: usize, den: usize) -> usize {
    assert!(den > 0 && num <= den, "rho_C must lie in [0, 1]");
    let accountable = (num * n_prime).div_ceil(den);
    (n_prime + accountable).div_ceil(2).max(1)
}
