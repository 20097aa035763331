//! Transaction logs and the prefix order `σ ⪯ τ`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::types::{Digest, Transaction};

/// An immutable sequence of transactions. Cloning is cheap.
///
/// Logs produced by successive executions chain by extension: the genesis log of
/// execution `r + 1` is a prefix of every log finalized in that execution, so the
/// flat representation already carries the whole lineage.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Log(Arc<[Transaction]>);

impl Log {
    pub fn empty() -> Self {
        Log::default()
    }

    pub fn from_txs(txs: impl IntoIterator<Item = Transaction>) -> Self {
        Log(txs.into_iter().collect::<Vec<_>>().into())
    }

    pub fn entries(&self) -> &[Transaction] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, tx: &Transaction) -> bool {
        self.0.iter().any(|t| t == tx)
    }

    /// `self ⪯ other`.
    pub fn is_prefix_of(&self, other: &Log) -> bool {
        is_prefix(self, other)
    }

    /// `self ≺ other`.
    pub fn is_strict_prefix_of(&self, other: &Log) -> bool {
        self.len() < other.len() && is_prefix(self, other)
    }

    pub fn extended(&self, txs: impl IntoIterator<Item = Transaction>) -> Log {
        let mut v = self.0.to_vec();
        v.extend(txs);
        Log(v.into())
    }

    pub fn truncated(&self, len: usize) -> Log {
        if len >= self.len() {
            return self.clone();
        }
        Log(self.0[..len].to_vec().into())
    }

    /// Length of the longest common prefix.
    pub fn common_prefix_len(&self, other: &Log) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }
}

impl fmt::Debug for Log {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl FromIterator<Transaction> for Log {
    fn from_iter<I: IntoIterator<Item = Transaction>>(iter: I) -> Self {
        Log::from_txs(iter)
    }
}

/// True iff `sigma`'s entries form an initial segment of `tau`'s entries.
pub fn is_prefix(sigma: &Log, tau: &Log) -> bool {
    sigma.len() <= tau.len() && sigma.0[..] == tau.0[..sigma.len()]
}

/// `σ ⪯ τ` or `τ ⪯ σ`.
pub fn compatible(sigma: &Log, tau: &Log) -> bool {
    is_prefix(sigma, tau) || is_prefix(tau, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn log(s: &str) -> Log {
        s.chars().map(|c| Transaction::new(c.to_string())).collect()
    }

    #[test]
    fn prefix_examples() {
        assert!(is_prefix(&log(""), &log("")));
        assert!(is_prefix(&log("a"), &log("ab")));
        assert!(!is_prefix(&log("ac"), &log("ab")));
        assert!(!is_prefix(&log("ab"), &log("a")));
        assert!(compatible(&log("ab"), &log("a")));
        assert!(!compatible(&log("ac"), &log("ab")));
    }

    #[test]
    fn strict_prefix_and_truncation() {
        assert!(log("a").is_strict_prefix_of(&log("ab")));
        assert!(!log("ab").is_strict_prefix_of(&log("ab")));
        assert_eq!(log("abc").truncated(2), log("ab"));
        assert_eq!(log("abc").common_prefix_len(&log("abd")), 2);
    }

    fn arb_log() -> impl Strategy<Value = Log> {
        prop::collection::vec(0u8..3, 0..5)
            .prop_map(|v| v.into_iter().map(|b| Transaction::new(vec![b])).collect())
    }

    proptest! {
        #[test]
        fn prefix_is_a_partial_order(a in arb_log(), b in arb_log(), c in arb_log()) {
            prop_assert!(is_prefix(&a, &a));
            if is_prefix(&a, &b) && is_prefix(&b, &c) {
                prop_assert!(is_prefix(&a, &c));
            }
            if is_prefix(&a, &b) && is_prefix(&b, &a) {
                prop_assert_eq!(&a, &b);
            }
        }

        #[test]
        fn truncation_is_prefix(a in arb_log(), k in 0usize..6) {
            prop_assert!(is_prefix(&a.truncated(k), &a));
        }
    }
}
