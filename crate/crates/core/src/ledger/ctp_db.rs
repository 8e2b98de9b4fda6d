// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{hash_parts, HashDigest, PublicKey};
use crate::tx::{Coins, CtpTx, Kwh, Tick};

const DIGEST_DOMAIN: &[u8] = b"spb/ctp-db/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtpEntry {
    pub ctp: CtpTx,
    pub inserted_at: Tick,
}

/// A miner's pending, unmined payment commitments keyed by CTP id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CtpDatabase {
    entries: BTreeMap<HashDigest, CtpEntry>,
}

impl CtpDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &HashDigest) -> Option<&CtpEntry> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &HashDigest) -> bool {
        self.entries.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HashDigest, &CtpEntry)> {
        self.entries.iter()
    }

    /// Returns false if the id is already present.
    pub fn insert(&mut self, ctp: CtpTx, inserted_at: Tick) -> bool {
        if self.entries.contains_key(&ctp.t_id) {
            return false;
        }
        self.entries.insert(ctp.t_id, CtpEntry { ctp, inserted_at });
        true
    }

    pub fn remove(&mut self, id: &HashDigest) -> Option<CtpEntry> {
        self.entries.remove(id)
    }

    /// Sum of prices the consumer `pk` has committed and not yet settled.
    pub fn pending_price(&self, pk: &PublicKey) -> Coins {
        self.entries
            .values()
            .filter(|e| e.ctp.pk == *pk)
            .map(|e| e.ctp.price)
            .sum()
    }

    /// Energy the producer `pk` has been promised to deliver.
    pub fn pending_energy(&self, payee: &PublicKey) -> Kwh {
        self.entries
            .values()
            .filter(|e| e.ctp.payee_pk == *payee)
            .map(|e| e.ctp.energy_amount)
            .sum()
    }

    /// Removes every entry with `expiry_time <= now`.
    pub fn expire(&mut self, now: Tick) -> Vec<CtpEntry> {
        let expired: Vec<HashDigest> = self
            .entries
            .iter()
            .filter(|(_, e)| e.ctp.expiry_time <= now)
            .map(|(id, _)| *id)
            .collect();
        expired.iter().filter_map(|id| self.entries.remove(id)).collect()
    }

    /// Hash over all entry ids in ascending order.
    pub fn digest(&self) -> HashDigest {
        Self::digest_of(self.entries.keys())
    }

    /// Digest of the entries that were admitted before `at` and are still
    /// live at `at`. Every honest miner that has seen the same CTP stream
    /// computes the same view regardless of when it sweeps expiries.
    pub fn digest_at(&self, at: Tick) -> HashDigest {
        self.digest_view(at, &BTreeSet::new())
    }

    /// [`Self::digest_at`] with `exclude` treated as already removed.
    pub fn digest_view(&self, at: Tick, exclude: &BTreeSet<HashDigest>) -> HashDigest {
        Self::view_of(self.entries.iter(), at, exclude)
    }

    /// View digest over an arbitrary entry set; ids may arrive in any order.
    pub(crate) fn view_of<'a>(
        entries: impl Iterator<Item = (&'a HashDigest, &'a CtpEntry)>,
        at: Tick,
        exclude: &BTreeSet<HashDigest>,
    ) -> HashDigest {
        let ids: BTreeSet<&HashDigest> = entries
            .filter(|(id, e)| e.inserted_at < at && e.ctp.expiry_time > at && !exclude.contains(*id))
            .map(|(id, _)| id)
            .collect();
        Self::digest_of(ids.into_iter())
    }

    fn digest_of<'a>(ids: impl Iterator<Item = &'a HashDigest>) -> HashDigest {
        let mut parts: Vec<&[u8]> = vec![DIGEST_DOMAIN];
        parts.extend(ids.map(|id| id.as_bytes().as_slice()));
        hash_parts(&parts)
    }
}
