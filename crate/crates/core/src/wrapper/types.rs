use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::crypto::Signed;
use crate::log::Log;
use crate::types::ProcessId;

/// View `(r, v)`: the `v`-th view of the `r`-th recovery. Ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ViewIndex {
    pub r: u32,
    pub v: u32,
}

impl ViewIndex {
    pub fn new(r: u32, v: u32) -> Self {
        ViewIndex { r, v }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenesisBody {
    pub log: Log,
    pub r: u32,
}

/// `(gen, σ, r)` signed by the sender.
pub type GenesisMessage = Signed<GenesisBody>;

/// `σ'` is extended by the genesis message iff `σ' ⪯ σ`.
pub fn genesis_extends(msg: &GenesisMessage, sigma: &Log) -> bool {
    sigma.is_prefix_of(&msg.body().log)
}

/// An `r`-proposal `(F, σ, M, r)`: processes to remove, the next genesis log,
/// and the genesis messages justifying it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RProposal {
    pub faulty: BTreeSet<ProcessId>,
    pub sigma: Log,
    pub justification: Vec<GenesisMessage>,
    pub r: u32,
}

impl RProposal {
    pub fn digest(&self) -> crate::types::Digest {
        crate::types::Digest::of(self)
    }
}

impl PartialOrd for RProposal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RProposal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.digest().cmp(&other.digest())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewProposalBody {
    pub proposal: RProposal,
    pub v: u32,
    pub qc: Option<Box<QuorumCert>>,
}

/// `(P, v, Q)` signed by the view leader.
pub type ViewProposal = Signed<ViewProposalBody>;

/// A vote re-signs the whole proposal.
pub type ViewVote = Signed<ViewProposal>;

pub fn view_of(proposal: &ViewProposal) -> ViewIndex {
    ViewIndex::new(proposal.body().proposal.r, proposal.body().v)
}

/// A set of votes for one `(r, v)`-proposal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumCert {
    pub target: ViewProposal,
    pub votes: Vec<ViewVote>,
}

impl QuorumCert {
    pub fn view(&self) -> ViewIndex {
        view_of(&self.target)
    }

    /// `P(Q)`.
    pub fn proposal(&self) -> &RProposal {
        &self.target.body().proposal
    }
}

/// `P` signed by a finishing process.
pub type FinishVote = Signed<RProposal>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinishQc {
    pub proposal: RProposal,
    pub votes: Vec<FinishVote>,
}
