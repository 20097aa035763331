//! Byzantine strategies.
//!
//! The adversary owns the signing keys of the corrupted processes and nothing
//! else. Each slot it sees everything the correct processes hold or have sent,
//! receives the messages addressed to corrupted processes, and emits messages
//! with requested delivery slots. It also picks delivery slots for messages
//! between correct processes; the simulator clamps every choice into the delay
//! envelope.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::SigningKey;
use crate::log::Log;
use crate::message::Message;
use crate::netsim::World;
use crate::perm::Permutation;
use crate::types::{ProcessId, Timeslot};
use crate::wrapper::WrapperConfig;

mod puppet;
mod split;

pub use puppet::Puppet;
pub use split::{Behavior, SplitBrain};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyId {
    #[default]
    Passive,
    SplitBrain,
    RecoveryStall,
    GenesisLiar,
    LeaderEquivocate,
    Combo,
}

impl StrategyId {
    pub const ALL: [StrategyId; 6] = [
        StrategyId::Passive,
        StrategyId::SplitBrain,
        StrategyId::RecoveryStall,
        StrategyId::GenesisLiar,
        StrategyId::LeaderEquivocate,
        StrategyId::Combo,
    ];
}

/// Knobs shared by the attacking strategies. Unused ones are ignored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyParams {
    /// Lowest block height at which a split may be staged.
    pub min_height: u64,
    /// Executions to attack, in order. Defaults per strategy.
    pub executions: Option<Vec<u32>>,
    /// Number of corrupted processes that double-vote in the first attack.
    /// Defaults to every corrupted member for `split-brain`, and to the
    /// smallest number that still splits the quorum otherwise.
    pub equivocators: Option<usize>,
    /// Pending transactions required before staging a split.
    pub min_pending: usize,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            min_height: 2,
            executions: None,
            equivocators: None,
            min_pending: 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub id: StrategyId,
    #[serde(default)]
    pub params: StrategyParams,
}

/// A message the adversary injects. `at` is the requested delivery slot;
/// `None` asks for the latest slot the envelope allows.
#[derive(Clone, Debug)]
pub struct Emission {
    pub from: ProcessId,
    pub msg: Message,
    pub to: Vec<ProcessId>,
    pub at: Option<Timeslot>,
}

pub trait Adversary {
    /// One slot. `inbox` holds what was delivered to each corrupted process.
    fn step(&mut self, world: &World<'_>, inbox: BTreeMap<ProcessId, Vec<Message>>) -> Vec<Emission>;

    /// Requested delivery slot for a message between correct processes, or
    /// `None` to leave it to the scenario's delay policy.
    fn route(&mut self, _world: &World<'_>, _from: ProcessId, _to: ProcessId, _msg: &Message) -> Option<Timeslot> {
        None
    }
}

/// Does nothing: corrupted processes stay silent.
#[derive(Debug, Default)]
pub struct Passive;

impl Adversary for Passive {
    fn step(&mut self, _world: &World<'_>, _inbox: BTreeMap<ProcessId, Vec<Message>>) -> Vec<Emission> {
        Vec::new()
    }
}

/// What the simulator hands the adversary at the start of a run.
#[derive(Debug)]
pub struct Setup {
    pub keys: BTreeMap<ProcessId, SigningKey>,
    pub pi: BTreeSet<ProcessId>,
    pub log_g: Log,
    pub pi_star: Permutation,
    pub cfg: WrapperConfig,
    pub offsets: BTreeMap<ProcessId, Timeslot>,
}

pub fn build(strategy: &StrategyConfig, setup: Setup) -> Box<dyn Adversary> {
    let p = &strategy.params;
    let behavior = match strategy.id {
        StrategyId::Passive => return Box::new(Passive),
        StrategyId::SplitBrain => Behavior::default(),
        StrategyId::RecoveryStall => Behavior {
            stall_views: true,
            ..Behavior::default()
        },
        StrategyId::GenesisLiar => Behavior {
            lie_genesis: true,
            ..Behavior::default()
        },
        StrategyId::LeaderEquivocate => Behavior {
            equivocate_views: true,
            ..Behavior::default()
        },
        StrategyId::Combo => Behavior::default(),
    };
    let executions = p.executions.clone().unwrap_or_else(|| match strategy.id {
        StrategyId::Combo => vec![1, 2],
        _ => vec![1],
    });
    let all_equivocate = strategy.id == StrategyId::SplitBrain && p.equivocators.is_none();
    Box::new(SplitBrain::new(setup, behavior, executions, p.clone(), all_equivocate))
}
