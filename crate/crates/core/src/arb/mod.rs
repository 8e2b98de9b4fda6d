// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

//! Anonymous routing backbone: backbone routers own contiguous slices of the
//! routing-byte space and forward messages by destination public key.
//!
//! The backbone is a full mesh, so any delivery is at most
//! entry backbone → responsible backbone → destination endpoint.

mod dht;
mod node;

pub use dht::{build_dht, rebalance_table, responsible_backbone, DhtTable, RoutingBytes, MAX_X};
pub use node::{BackboneNode, JoinMessage};

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::crypto::PublicKey;
use crate::tx::{Tick, Transaction};

pub type BackboneId = u32;

/// Simulated network address of a regular or backbone node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArbError {
    #[error("empty backbone set")]
    EmptyBackbone,
    #[error("duplicate backbone id")]
    DuplicateBackbone,
    #[error("prefix length {0} outside 1..={MAX_X}")]
    BadPrefixLength(u8),
    #[error("{backbones} backbones exceed the routing space at x={x}")]
    TooManyBackbones { backbones: usize, x: u8 },
    #[error("new prefix length {requested} must exceed {current}")]
    NotWider { current: u8, requested: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum JoinError {
    #[error("impersonation")]
    Impersonation,
    #[error("misrouted join (owner is backbone {owner})")]
    Misrouted { owner: BackboneId },
    #[error("unknown backbone")]
    UnknownBackbone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Hop {
    Backbone(BackboneId),
    Endpoint(Endpoint),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("unknown entry backbone {0}")]
    UnknownBackbone(BackboneId),
    #[error("undeliverable")]
    Undeliverable { trace: Vec<Hop> },
    #[error("offer limit reached")]
    OfferLimit { trace: Vec<Hop> },
}

/// A message handed to an entry backbone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub origin: Endpoint,
    pub dest_pk: PublicKey,
    pub payload: Vec<u8>,
    /// Sender reached the backbone through an anonymizing relay; the origin
    /// is not disclosed to the destination.
    pub anonymized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    /// Backbone hops then the destination endpoint; at most three entries.
    pub trace: Vec<Hop>,
    pub endpoint: Endpoint,
    pub origin: Option<Endpoint>,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArbConfig {
    pub x: u8,
    pub offer_limit: u32,
    pub load_window: Tick,
    /// Per-backbone window load above which the table is widened.
    pub overload_threshold: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArbStats {
    pub routed: u64,
    pub delivered: u64,
    pub undeliverable: u64,
    pub offers_dropped: u64,
    pub inter_backbone_hops: u64,
    /// Deliveries a naive flood to every regular endpoint would have made.
    pub broadcast_baseline: u64,
    pub joins_accepted: u64,
    pub joins_rejected: u64,
    pub rebalances: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RebalanceReport {
    pub x_before: u8,
    pub x_after: u8,
    pub loads_before: BTreeMap<BackboneId, u64>,
    pub loads_after: BTreeMap<BackboneId, u64>,
    /// Members whose responsible backbone changed: `(pk, from, to)`.
    pub moved: Vec<(PublicKey, BackboneId, BackboneId)>,
}

impl RebalanceReport {
    pub fn max_before(&self) -> u64 {
        self.loads_before.values().copied().max().unwrap_or(0)
    }

    pub fn max_after(&self) -> u64 {
        self.loads_after.values().copied().max().unwrap_or(0)
    }
}

/// The whole backbone: shared table plus every router's state.
#[derive(Debug, Clone)]
pub struct Arb {
    config: ArbConfig,
    table: DhtTable,
    nodes: BTreeMap<BackboneId, BackboneNode>,
    /// `(tick, destination)` of every routed message still inside the load window.
    recent: VecDeque<(Tick, PublicKey)>,
    last_rebalance: Option<Tick>,
    stats: ArbStats,
}

impl Arb {
    /// Backbones get ids `0..n` and addresses `Endpoint(0..n)`.
    pub fn new(backbones: u32, config: ArbConfig) -> Result<Self, ArbError> {
        let ids: Vec<BackboneId> = (0..backbones).collect();
        let table = build_dht(&ids, config.x)?;
        let nodes = ids.iter().map(|&id| (id, BackboneNode::new(id, Endpoint(id)))).collect();
        Ok(Self {
            config,
            table,
            nodes,
            recent: VecDeque::new(),
            last_rebalance: None,
            stats: ArbStats::default(),
        })
    }

    pub fn config(&self) -> &ArbConfig {
        &self.config
    }

    pub fn table(&self) -> &DhtTable {
        &self.table
    }

    pub fn node(&self, id: BackboneId) -> Option<&BackboneNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &BackboneNode> {
        self.nodes.values()
    }

    pub fn stats(&self) -> ArbStats {
        self.stats
    }

    pub fn member_count(&self) -> usize {
        self.nodes.values().map(|n| n.members().len()).sum()
    }

    /// Sends the join to the backbone the table names for `msg.pk`.
    pub fn join(&mut self, msg: &JoinMessage) -> Result<BackboneId, JoinError> {
        let owner = self.table.responsible(&msg.pk);
        self.join_via(owner, msg).map(|_| owner)
    }

    pub fn join_via(&mut self, backbone: BackboneId, msg: &JoinMessage) -> Result<(), JoinError> {
        let node = self.nodes.get_mut(&backbone).ok_or(JoinError::UnknownBackbone)?;
        let result = node.join(&self.table, msg);
        match result {
            Ok(()) => self.stats.joins_accepted += 1,
            Err(_) => self.stats.joins_rejected += 1,
        }
        result
    }

    /// Forwards `env` from `entry` to the backbone responsible for its
    /// destination and on to the member endpoint.
    pub fn route(&mut self, entry: BackboneId, env: &Envelope, now: Tick) -> Result<Delivery, RouteError> {
        if !self.nodes.contains_key(&entry) {
            return Err(RouteError::UnknownBackbone(entry));
        }
        self.stats.routed += 1;
        let owner = self.table.responsible(&env.dest_pk);
        let mut trace = vec![Hop::Backbone(entry)];
        if owner != entry {
            trace.push(Hop::Backbone(owner));
            self.stats.inter_backbone_hops += 1;
        }
        self.stats.broadcast_baseline += self.member_count() as u64;
        self.recent.push_back((now, env.dest_pk));
        let node = self.nodes.get_mut(&owner).expect("table owners are nodes");
        node.record_load(now);

        let Some(endpoint) = node.endpoint_of(&env.dest_pk) else {
            self.stats.undeliverable += 1;
            return Err(RouteError::Undeliverable { trace });
        };
        if let Ok(Transaction::Negotiation(msg)) = Transaction::decode(&env.payload) {
            if !node.admit_offer(&msg, self.config.offer_limit) {
                self.stats.offers_dropped += 1;
                return Err(RouteError::OfferLimit { trace });
            }
        }
        trace.push(Hop::Endpoint(endpoint));
        self.stats.delivered += 1;
        Ok(Delivery {
            trace,
            endpoint,
            origin: (!env.anonymized).then_some(env.origin),
            payload: env.payload.clone(),
        })
    }

    fn trim_window(&mut self, now: Tick) {
        let w = self.config.load_window;
        while self.recent.front().is_some_and(|&(t, _)| t + w <= now) {
            self.recent.pop_front();
        }
    }

    pub fn loads(&mut self, now: Tick) -> BTreeMap<BackboneId, u64> {
        let w = self.config.load_window;
        self.nodes.iter_mut().map(|(&id, n)| (id, n.load(now, w))).collect()
    }

    /// The most loaded backbone if it is above the overload threshold.
    pub fn overloaded(&mut self, now: Tick) -> Option<BackboneId> {
        let threshold = self.config.overload_threshold;
        self.loads(now)
            .into_iter()
            .filter(|&(_, load)| load > threshold)
            .max_by_key(|&(id, load)| (load, std::cmp::Reverse(id)))
            .map(|(id, _)| id)
    }

    /// Widens the prefix by one byte when some backbone is overloaded. At most
    /// once per load window, so the new table is judged on fresh traffic.
    pub fn maybe_rebalance(&mut self, now: Tick) -> Option<RebalanceReport> {
        let cooling = self.last_rebalance.is_some_and(|t| now < t + self.config.load_window);
        if cooling || self.table.x() >= MAX_X || self.overloaded(now).is_none() {
            return None;
        }
        self.rebalance(self.table.x() + 1, now).ok()
    }

    /// Rebuilds the table at `new_x` and re-associates every member. Loads
    /// before and after are the current window's traffic looked up against
    /// the old and the new table.
    pub fn rebalance(&mut self, new_x: u8, now: Tick) -> Result<RebalanceReport, ArbError> {
        self.trim_window(now);
        let observed: Vec<PublicKey> = self.recent.iter().map(|(_, pk)| *pk).collect();
        let next = rebalance_table(&self.table, new_x, &observed)?;
        let tally = |table: &DhtTable| {
            let mut loads: BTreeMap<BackboneId, u64> = table.backbones().iter().map(|&id| (id, 0)).collect();
            for pk in &observed {
                *loads.get_mut(&table.responsible(pk)).unwrap() += 1;
            }
            loads
        };
        let loads_before = tally(&self.table);
        let loads_after = tally(&next);

        let mut members = Vec::new();
        let mut offers = Vec::new();
        for (&id, node) in self.nodes.iter_mut() {
            members.extend(node.take_members().into_iter().map(|(pk, ep)| (id, pk, ep)));
            offers.extend(node.take_offers());
            node.clear_window();
        }
        let mut moved = Vec::new();
        for (from, pk, ep) in members {
            let to = next.responsible(&pk);
            if to != from {
                moved.push((pk, from, to));
            }
            self.nodes.get_mut(&to).unwrap().adopt_member(pk, ep);
        }
        for (key, count) in offers {
            self.nodes.get_mut(&next.responsible(&key.1)).unwrap().adopt_offers(key, count);
        }
        for &(t, pk) in &self.recent {
            self.nodes.get_mut(&next.responsible(&pk)).unwrap().replay_load(t);
        }
        let x_before = self.table.x();
        self.table = next;
        self.last_rebalance = Some(now);
        self.stats.rebalances += 1;
        Ok(RebalanceReport {
            x_before,
            x_after: new_x,
            loads_before,
            loads_after,
            moved,
        })
    }
}

#[cfg(test)]
mod tests;
