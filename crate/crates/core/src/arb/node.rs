// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, VecDeque};

use super::{BackboneId, DhtTable, Endpoint, JoinError};
use crate::crypto::{verify, KeyPair, PublicKey, Signature};
use crate::tx::{NegotiationMsg, Tick};

const JOIN_DOMAIN: &[u8] = b"spb/arb-join/v1";

/// Association request for one public key, signed by that key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinMessage {
    pub pk: PublicKey,
    pub endpoint: Endpoint,
    pub sign: Signature,
}

impl JoinMessage {
    pub fn signed_bytes(pk: &PublicKey, endpoint: Endpoint) -> Vec<u8> {
        [JOIN_DOMAIN, pk.as_bytes(), &endpoint.0.to_be_bytes()].concat()
    }

    pub fn new(keys: &KeyPair, endpoint: Endpoint) -> Self {
        let pk = keys.public();
        Self {
            pk,
            endpoint,
            sign: keys.sign(&Self::signed_bytes(&pk, endpoint)),
        }
    }

    pub fn signature_valid(&self) -> bool {
        verify(&self.pk, &Self::signed_bytes(&self.pk, self.endpoint), &self.sign)
    }
}

/// One backbone router. Members are only ever added through a verified join
/// or moved by a table rebuild.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneNode {
    pub id: BackboneId,
    pub address: Endpoint,
    members: BTreeMap<PublicKey, Endpoint>,
    /// Arrival ticks of messages this node was responsible for.
    window: VecDeque<Tick>,
    /// Negotiation messages admitted per (sender, destination).
    offers: BTreeMap<(PublicKey, PublicKey), u32>,
    total_load: u64,
}

impl BackboneNode {
    pub fn new(id: BackboneId, address: Endpoint) -> Self {
        Self {
            id,
            address,
            members: BTreeMap::new(),
            window: VecDeque::new(),
            offers: BTreeMap::new(),
            total_load: 0,
        }
    }

    pub fn members(&self) -> &BTreeMap<PublicKey, Endpoint> {
        &self.members
    }

    pub fn endpoint_of(&self, pk: &PublicKey) -> Option<Endpoint> {
        self.members.get(pk).copied()
    }

    pub fn join(&mut self, table: &DhtTable, msg: &JoinMessage) -> Result<(), JoinError> {
        if !msg.signature_valid() {
            return Err(JoinError::Impersonation);
        }
        let owner = table.responsible(&msg.pk);
        if owner != self.id {
            return Err(JoinError::Misrouted { owner });
        }
        self.members.insert(msg.pk, msg.endpoint);
        Ok(())
    }

    pub(crate) fn take_members(&mut self) -> BTreeMap<PublicKey, Endpoint> {
        std::mem::take(&mut self.members)
    }

    pub(crate) fn adopt_member(&mut self, pk: PublicKey, endpoint: Endpoint) {
        self.members.insert(pk, endpoint);
    }

    pub(crate) fn take_offers(&mut self) -> BTreeMap<(PublicKey, PublicKey), u32> {
        std::mem::take(&mut self.offers)
    }

    pub(crate) fn adopt_offers(&mut self, key: (PublicKey, PublicKey), count: u32) {
        self.offers.insert(key, count);
    }

    pub(crate) fn record_load(&mut self, now: Tick) {
        self.window.push_back(now);
        self.total_load += 1;
    }

    /// Re-attributes a windowed message after a table rebuild.
    pub(crate) fn replay_load(&mut self, at: Tick) {
        self.window.push_back(at);
    }

    /// Every message this node was responsible for since creation.
    pub fn total_load(&self) -> u64 {
        self.total_load
    }

    pub(crate) fn clear_window(&mut self) {
        self.window.clear();
    }

    /// Messages in the window `(now - window, now]`.
    pub fn load(&mut self, now: Tick, window: Tick) -> u64 {
        while self.window.front().is_some_and(|&t| t + window <= now) {
            self.window.pop_front();
        }
        self.window.len() as u64
    }

    /// Admits a negotiation message unless its round exceeds `offer_limit` or
    /// this sender already used up `offer_limit` messages toward the destination.
    pub(crate) fn admit_offer(&mut self, msg: &NegotiationMsg, offer_limit: u32) -> bool {
        if msg.round > offer_limit {
            return false;
        }
        let used = self.offers.entry((msg.sender_pk, msg.dest_pk)).or_default();
        if *used >= offer_limit {
            return false;
        }
        *used += 1;
        true
    }

    pub fn offers_admitted(&self, sender: &PublicKey, dest: &PublicKey) -> u32 {
        self.offers.get(&(*sender, *dest)).copied().unwrap_or(0)
    }
}
