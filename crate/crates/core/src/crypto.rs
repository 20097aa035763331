//! Ideal signatures.
//!
//! A [`Signed`] value can only be produced through a [`SigningKey`], and the
//! simulator hands each key to exactly one actor: the owning correct process, or
//! the adversary for corrupted identities. Forgery is therefore impossible by
//! construction rather than by cryptographic hardness.

use serde::{Deserialize, Serialize};

use crate::types::{Digest, ProcessId};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signed<M> {
    body: M,
    signer: ProcessId,
}

impl<M> Signed<M> {
    pub fn body(&self) -> &M {
        &self.body
    }

    pub fn signer(&self) -> ProcessId {
        self.signer
    }
}

impl<M: Serialize> Signed<M> {
    /// Digest identifying this exact signed value.
    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }
}

/// The right to sign as one process.
#[derive(Debug)]
pub struct SigningKey {
    owner: ProcessId,
}

impl SigningKey {
    /// Key issuance is reserved to the crate: the simulator distributes keys, and
    /// tests build them through [`Keychain`].
    pub(crate) fn new(owner: ProcessId) -> Self {
        SigningKey { owner }
    }

    pub fn owner(&self) -> ProcessId {
        self.owner
    }

    pub fn sign<M>(&self, body: M) -> Signed<M> {
        Signed {
            body,
            signer: self.owner,
        }
    }
}

/// The PKI: issues every key exactly once.
#[derive(Debug)]
pub struct Keychain {
    issued: std::collections::BTreeSet<ProcessId>,
}

impl Keychain {
    pub fn new() -> Self {
        Keychain {
            issued: Default::default(),
        }
    }

    /// Returns `None` when the key for `id` was already handed out.
    pub fn issue(&mut self, id: ProcessId) -> Option<SigningKey> {
        self.issued.insert(id).then(|| SigningKey::new(id))
    }
}

impl Default for Keychain {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_issued_once() {
        let mut kc = Keychain::new();
        let k = kc.issue(ProcessId(1)).unwrap();
        assert!(kc.issue(ProcessId(1)).is_none());
        let s = k.sign(7u32);
        assert_eq!(s.signer(), ProcessId(1));
        assert_eq!(*s.body(), 7);
    }
}
