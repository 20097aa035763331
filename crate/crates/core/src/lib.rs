//! Recovery from consistency violations for accountable state-machine
//! replication.
//!
//! The crate has four layers:
//!
//! * [`base`]: a concrete accountable SMR protocol with its finalization
//!   function, violation detector and proofs of guilt.
//! * [`wrapper`]: the per-process recovery state machine that runs successive
//!   executions of the base protocol and repairs violations between them.
//! * [`global_f`]: the wrapper-level finalization function any client can
//!   evaluate on a set of messages.
//! * [`netsim`], [`adversary`] and [`harness`]: a deterministic lockstep
//!   simulator, Byzantine strategies, and the metrics and checks run over
//!   traces.

pub mod adversary;
pub mod base;
pub mod crypto;
pub mod finalize;
pub mod harness;
pub mod log;
pub mod message;
pub mod netsim;
pub mod perm;
pub mod types;
pub mod wrapper;

#[cfg(test)]
mod testkit;

pub use finalize::{count_violations, global_f, FinalizeResult};
pub use log::{compatible, is_prefix, Log};
pub use message::{Message, MessageSet, Payload};
pub use types::{Digest, ProcessId, Timeslot, Transaction};
