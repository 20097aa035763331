//! The shared random permutation `Π*` and the permutations it induces on subsets.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ProcessId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermutationError {
    #[error("no leaders available: empty process subset")]
    EmptySubset,
    #[error("{0} is not in the permutation's range")]
    NotInRange(ProcessId),
    #[error("position {position} out of range for {len} processes")]
    OutOfRange { position: usize, len: usize },
    #[error("order is not a bijection")]
    NotBijective,
}

/// A bijection `[1, n] → Π`, stored as the ordered list of processes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation {
    order: Vec<ProcessId>,
}

impl Permutation {
    pub fn new(order: Vec<ProcessId>) -> Result<Self, PermutationError> {
        let distinct: BTreeSet<_> = order.iter().collect();
        if distinct.len() != order.len() {
            return Err(PermutationError::NotBijective);
        }
        Ok(Permutation { order })
    }

    /// Uniformly random permutation of `processes`.
    pub fn sample<R: Rng + ?Sized>(processes: &[ProcessId], rng: &mut R) -> Self {
        let mut order = processes.to_vec();
        order.shuffle(rng);
        Permutation { order }
    }

    pub fn order(&self) -> &[ProcessId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based lookup: `Π*(v)`.
    pub fn at(&self, position: usize) -> Result<ProcessId, PermutationError> {
        if position == 0 || position > self.order.len() {
            return Err(PermutationError::OutOfRange {
                position,
                len: self.order.len(),
            });
        }
        Ok(self.order[position - 1])
    }
}

/// Restriction of `pi_star` to `subset`, preserving relative order.
pub fn induced_permutation(
    pi_star: &Permutation,
    subset: &BTreeSet<ProcessId>,
) -> Result<Permutation, PermutationError> {
    if subset.is_empty() {
        return Err(PermutationError::EmptySubset);
    }
    if let Some(p) = subset.iter().find(|p| !pi_star.order.contains(p)) {
        return Err(PermutationError::NotInRange(*p));
    }
    let order = pi_star
        .order
        .iter()
        .copied()
        .filter(|p| subset.contains(p))
        .collect();
    Ok(Permutation { order })
}
