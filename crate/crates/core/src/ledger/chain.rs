// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use super::{Block, ChainState};
use crate::crypto::HashDigest;

#[derive(Debug, Clone)]
pub struct StoredBlock {
    pub block: Block,
    pub hash: HashDigest,
    /// Ledger state after applying this block.
    pub state: ChainState,
}

/// Block tree with a longest-chain tip. Ties at equal height go to the block
/// with the smaller miner key, then the smaller block hash.
#[derive(Debug, Clone)]
pub struct Blockchain {
    anchor: HashDigest,
    genesis_state: ChainState,
    blocks: BTreeMap<HashDigest, StoredBlock>,
    tip: Option<HashDigest>,
}

impl Blockchain {
    pub fn new(anchor: HashDigest, genesis_state: ChainState) -> Self {
        Self {
            anchor,
            genesis_state,
            blocks: BTreeMap::new(),
            tip: None,
        }
    }

    pub fn anchor(&self) -> HashDigest {
        self.anchor
    }

    /// Hash of the best block, or the anchor for an empty chain.
    pub fn tip_hash(&self) -> HashDigest {
        self.tip.unwrap_or(self.anchor)
    }

    pub fn height(&self) -> u64 {
        self.tip.map_or(0, |h| self.blocks[&h].block.height)
    }

    pub fn tip_block(&self) -> Option<&Block> {
        self.tip.map(|h| &self.blocks[&h].block)
    }

    pub fn tip_state(&self) -> &ChainState {
        self.state_at(&self.tip_hash()).expect("tip is always stored")
    }

    pub fn genesis_state(&self) -> &ChainState {
        &self.genesis_state
    }

    pub fn contains(&self, hash: &HashDigest) -> bool {
        self.blocks.contains_key(hash)
    }

    pub fn get(&self, hash: &HashDigest) -> Option<&StoredBlock> {
        self.blocks.get(hash)
    }

    /// State after `hash`; the anchor maps to the initial state.
    pub fn state_at(&self, hash: &HashDigest) -> Option<&ChainState> {
        if *hash == self.anchor {
            Some(&self.genesis_state)
        } else {
            self.blocks.get(hash).map(|b| &b.state)
        }
    }

    pub fn height_of(&self, hash: &HashDigest) -> Option<u64> {
        if *hash == self.anchor {
            Some(0)
        } else {
            self.blocks.get(hash).map(|b| b.block.height)
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub(crate) fn insert(&mut self, block: Block, hash: HashDigest, state: ChainState) {
        self.blocks.insert(hash, StoredBlock { block, hash, state });
    }

    /// True if `candidate` should replace the current tip.
    pub fn is_better_than_tip(&self, candidate: &HashDigest) -> bool {
        let Some(tip) = self.tip else {
            return true;
        };
        let (a, b) = (&self.blocks[candidate], &self.blocks[&tip]);
        (a.block.height, std::cmp::Reverse((a.block.miner_pk, a.hash)))
            > (b.block.height, std::cmp::Reverse((b.block.miner_pk, b.hash)))
    }

    pub(crate) fn set_tip(&mut self, hash: HashDigest) {
        self.tip = Some(hash);
    }

    /// Blocks from height 1 up to `hash`, oldest first.
    pub fn path_to(&self, hash: &HashDigest) -> Vec<&StoredBlock> {
        let mut out = Vec::new();
        let mut cur = *hash;
        while let Some(b) = self.blocks.get(&cur) {
            out.push(b);
            cur = b.block.prev_hash;
        }
        out.reverse();
        out
    }

    /// Best chain, oldest first.
    pub fn best_chain(&self) -> Vec<&Block> {
        self.path_to(&self.tip_hash()).into_iter().map(|b| &b.block).collect()
    }

    /// Blocks leaving the chain and blocks joining it when the tip moves from
    /// `from` to `to`, each oldest first.
    pub(crate) fn branch_diff(&self, from: &HashDigest, to: &HashDigest) -> (Vec<HashDigest>, Vec<HashDigest>) {
        let old: Vec<_> = self.path_to(from).iter().map(|b| b.hash).collect();
        let new: Vec<_> = self.path_to(to).iter().map(|b| b.hash).collect();
        let old_set: BTreeSet<_> = old.iter().copied().collect();
        let split = new.iter().take_while(|h| old_set.contains(h)).count();
        let common = &new[..split];
        let common_set: BTreeSet<_> = common.iter().copied().collect();
        let leaving = old.into_iter().filter(|h| !common_set.contains(h)).collect();
        (leaving, new[split..].to_vec())
    }
}
