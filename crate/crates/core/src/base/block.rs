use serde::{Deserialize, Serialize};

use crate::crypto::Signed;
use crate::types::{Digest, ProcessId, Transaction};

/// Identifier of one execution `E_r` of the base protocol.
pub type ExecId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct BlockData {
    height: u64,
    parent: Option<Digest>,
    txs: Vec<Transaction>,
    proposer: ProcessId,
    exec: ExecId,
}

/// A block of the base protocol. `parent == None` means the block extends the
/// genesis log of its execution. The digest covers every field and is cached.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "BlockData", into = "BlockData")]
pub struct Block {
    data: BlockData,
    digest: Digest,
}

impl From<BlockData> for Block {
    fn from(data: BlockData) -> Self {
        let digest = Digest::of(&data);
        Block { data, digest }
    }
}

impl From<Block> for BlockData {
    fn from(b: Block) -> Self {
        b.data
    }
}

impl Block {
    pub fn new(
        height: u64,
        parent: Option<Digest>,
        txs: Vec<Transaction>,
        proposer: ProcessId,
        exec: ExecId,
    ) -> Self {
        BlockData {
            height,
            parent,
            txs,
            proposer,
            exec,
        }
        .into()
    }

    pub fn height(&self) -> u64 {
        self.data.height
    }
    pub fn parent(&self) -> Option<Digest> {
        self.data.parent
    }
    pub fn txs(&self) -> &[Transaction] {
        &self.data.txs
    }
    pub fn proposer(&self) -> ProcessId {
        self.data.proposer
    }
    pub fn exec(&self) -> ExecId {
        self.data.exec
    }
    pub fn digest(&self) -> Digest {
        self.digest
    }
}

/// A leader's proposal of `block` in a round of the block's height.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockProposal {
    pub block: Block,
    pub round: u32,
}

/// Non-binding first-phase vote. Never used as evidence. A `None` digest is
/// the nil prevote a process sends when its round times out without a block.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Prevote {
    pub exec: ExecId,
    pub height: u64,
    pub round: u32,
    pub digest: Option<Digest>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoteBody {
    pub exec: ExecId,
    pub height: u64,
    pub digest: Digest,
}

/// Binding vote: a correct process casts at most one per `(exec, height)`.
pub type BlockVote = Signed<VoteBody>;

/// Quorum certificate for `block`: the block itself plus the votes for it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockQc {
    pub block: Block,
    pub votes: Vec<BlockVote>,
}

/// Two conflicting binding votes by the same process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiltProof {
    pub culprit: ProcessId,
    pub first: BlockVote,
    pub second: BlockVote,
}

impl GuiltProof {
    /// Checks the evidence itself, independent of where it was found.
    pub fn is_well_formed(&self) -> bool {
        let (a, b) = (self.first.body(), self.second.body());
        self.first.signer() == self.culprit
            && self.second.signer() == self.culprit
            && a.exec == b.exec
            && a.height == b.height
            && a.digest != b.digest
    }
}
