// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;

use super::dump::{ChainDump, DumpRecord};
use super::state::check_genesis_evidence;
use super::{
    validate_erc, AccountState, Block, BlockRejection, Blockchain, ChainState, CtpDatabase, CtpEntry, LedgerConfig,
    Rejection, Settlement,
};
use crate::crypto::{hash_parts, HashDigest, KeyPair, PublicKey};
use crate::tx::{check_structure, Coins, CtpTx, ErcTx, GenesisTx, SupplyEnergyTx, Tick, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Removal {
    Settled,
    Expired,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MinerStats {
    pub ctps_accepted: u64,
    pub ctps_rejected: u64,
    pub ctps_expired: u64,
    /// Settlements on the current best chain.
    pub ctps_settled: u64,
    pub blocks_mined: u64,
    pub blocks_applied: u64,
    pub blocks_rejected: u64,
    pub reorgs: u64,
    pub ctp_hash_checks: u64,
    pub ctp_hash_mismatches: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApplyOutcome {
    pub already_known: bool,
    pub became_tip: bool,
    pub reorged: bool,
    /// Header `ctp_hash` against the local view, checked when the block
    /// becomes the tip.
    pub ctp_hash_matches: Option<bool>,
    pub settlements: Vec<Settlement>,
}

/// A miner's full node: chain, CTP database, mempool and DTC schedule.
#[derive(Debug, Clone)]
pub struct MinerState {
    keys: KeyPair,
    config: Arc<LedgerConfig>,
    chain: Blockchain,
    ctp_db: CtpDatabase,
    /// Entries that left the CTP database, kept for fork switches.
    archive: BTreeMap<HashDigest, (CtpEntry, Removal)>,
    mempool: Vec<Transaction>,
    mempool_ids: BTreeSet<HashDigest>,
    next_mine_at: Tick,
    current_period: u64,
    blocks_this_period: u32,
    stats: MinerStats,
    journal: Vec<DumpRecord>,
}

impl MinerState {
    pub fn new<R: Rng>(keys: KeyPair, config: Arc<LedgerConfig>, rng: &mut R) -> Self {
        let period = config.consensus_period;
        let chain = Blockchain::new(config.anchor(), ChainState::from_config(&config));
        Self {
            keys,
            chain,
            ctp_db: CtpDatabase::new(),
            archive: BTreeMap::new(),
            mempool: Vec::new(),
            mempool_ids: BTreeSet::new(),
            next_mine_at: rng.gen_range(0..period),
            current_period: 0,
            blocks_this_period: 0,
            stats: MinerStats::default(),
            journal: Vec::new(),
            config,
        }
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public()
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    pub fn chain(&self) -> &Blockchain {
        &self.chain
    }

    pub fn state(&self) -> &ChainState {
        self.chain.tip_state()
    }

    pub fn accounts(&self) -> &BTreeMap<PublicKey, AccountState> {
        self.state().accounts()
    }

    pub fn ctp_db(&self) -> &CtpDatabase {
        &self.ctp_db
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn stats(&self) -> MinerStats {
        self.stats
    }

    pub fn next_mine_at(&self) -> Tick {
        self.next_mine_at
    }

    pub fn blocks_this_period(&self) -> u32 {
        self.blocks_this_period
    }

    /// Coins the consumer can still commit: chain balance minus pending CTPs.
    pub fn available_coins(&self, pk: &PublicKey) -> Coins {
        self.state().coin_balance(pk).saturating_sub(self.ctp_db.pending_price(pk))
    }

    /// Keys whose pending CTP total exceeds their chain balance. Always
    /// empty unless the double-spend rule is broken.
    pub fn funds_violations(&self) -> Vec<PublicKey> {
        let consumers: BTreeSet<_> = self.ctp_db.iter().map(|(_, e)| e.ctp.pk).collect();
        consumers
            .into_iter()
            .filter(|pk| self.ctp_db.pending_price(pk) > self.state().coin_balance(pk))
            .collect()
    }

    fn push_mempool(&mut self, tx: Transaction) -> Result<(), Rejection> {
        if !self.mempool_ids.insert(tx.id()) {
            return Err(Rejection::Duplicate);
        }
        self.mempool.push(tx);
        Ok(())
    }

    /// Last energy-account transaction for `pk`, counting unmined ones.
    fn pending_last_tx(&self, pk: &PublicKey) -> Option<HashDigest> {
        self.mempool
            .iter()
            .rev()
            .find_map(|tx| match tx {
                Transaction::Genesis(g) if g.pk == *pk => Some(g.id()),
                Transaction::SupplyEnergy(s) if s.pk == *pk => Some(s.t_id),
                _ => None,
            })
            .or_else(|| self.state().last_tx_id(pk))
    }

    pub fn submit_genesis(&mut self, tx: GenesisTx) -> Result<(), Rejection> {
        check_structure(&tx.clone().into())?;
        if self.pending_last_tx(&tx.pk).is_some() {
            return Err(Rejection::AccountExists);
        }
        check_genesis_evidence(&tx, &self.config)?;
        self.push_mempool(tx.into())
    }

    pub fn submit_supply_energy(&mut self, tx: SupplyEnergyTx) -> Result<(), Rejection> {
        check_structure(&tx.clone().into())?;
        match self.pending_last_tx(&tx.pk) {
            None => Err(Rejection::UnknownAccount),
            Some(last) if last != tx.p_t_id => Err(Rejection::ChainBreak),
            Some(_) => self.push_mempool(tx.into()),
        }
    }

    /// Admits a CTP into the pending database. The commitment must fit in the
    /// consumer's chain balance minus everything it already has pending.
    pub fn submit_ctp(&mut self, tx: CtpTx, now: Tick) -> Result<(), Rejection> {
        let result = self.admit_ctp(tx, now);
        if result.is_err() {
            self.stats.ctps_rejected += 1;
        }
        result
    }

    fn admit_ctp(&mut self, tx: CtpTx, now: Tick) -> Result<(), Rejection> {
        check_structure(&tx.clone().into())?;
        if now >= tx.expiry_time {
            return Err(Rejection::Stale);
        }
        if self.ctp_db.contains(&tx.t_id) || self.archive.contains_key(&tx.t_id) {
            return Err(Rejection::Duplicate);
        }
        let available = self.available_coins(&tx.pk);
        if tx.price > available {
            return Err(Rejection::WouldDoubleSpend {
                available,
                price: tx.price,
            });
        }
        let payee = self.state().account(&tx.payee_pk).copied().unwrap_or_default();
        if !payee.has_energy_account() {
            return Err(Rejection::UnknownPayee);
        }
        let free_energy = payee.energy_balance.saturating_sub(self.ctp_db.pending_energy(&tx.payee_pk));
        if tx.energy_amount > free_energy {
            return Err(Rejection::InsufficientEnergy {
                available: free_energy,
                requested: tx.energy_amount,
            });
        }
        self.journal.push(DumpRecord::Ctp { at: now, ctp: tx.clone() });
        self.ctp_db.insert(tx, now);
        self.stats.ctps_accepted += 1;
        Ok(())
    }

    /// Releases every CTP with `expiry_time <= now`. Idempotent for a fixed `now`.
    pub fn expire_ctps(&mut self, now: Tick) -> Vec<HashDigest> {
        let expired = self.ctp_db.expire(now);
        self.stats.ctps_expired += expired.len() as u64;
        expired
            .into_iter()
            .map(|e| {
                let id = e.ctp.t_id;
                self.archive.insert(id, (e, Removal::Expired));
                id
            })
            .collect()
    }

    pub fn validate_erc(&self, erc: &ErcTx) -> Result<(), Rejection> {
        validate_erc(erc, &self.ctp_db, &self.config.manufacturer_ca).map_err(Rejection::InvalidErc)
    }

    pub fn submit_erc(&mut self, erc: ErcTx) -> Result<(), Rejection> {
        self.validate_erc(&erc)?;
        check_structure(&erc.clone().into())?;
        if self.state().is_settled(&erc.ctp_id) {
            return Err(Rejection::AlreadySettled);
        }
        self.push_mempool(erc.into())
    }

    /// Routes any transaction to its admission rule.
    pub fn submit(&mut self, tx: Transaction, now: Tick) -> Result<(), Rejection> {
        match tx {
            Transaction::Genesis(t) => self.submit_genesis(t),
            Transaction::SupplyEnergy(t) => self.submit_supply_energy(t),
            Transaction::Ctp(t) => self.submit_ctp(t, now),
            Transaction::Erc(t) => self.submit_erc(t),
            Transaction::Negotiation(_) => Err(Rejection::NotMineable(crate::tx::TxKind::Negotiation)),
        }
    }

    /// CTP view at `at`, counting entries already swept locally that were
    /// still live at `at`. Sweep timing therefore never changes the view.
    fn ctp_view(&self, at: Tick, exclude: &BTreeSet<HashDigest>) -> HashDigest {
        let swept = self
            .archive
            .iter()
            .filter(|(_, (_, why))| *why == Removal::Expired)
            .map(|(id, (e, _))| (id, e));
        CtpDatabase::view_of(self.ctp_db.iter().chain(swept), at, exclude)
    }

    /// Hash over every CTP id this miner ever admitted. Equal across miners
    /// that accepted the same subset of a CTP stream.
    pub fn admitted_digest(&self) -> HashDigest {
        let ids: BTreeSet<&HashDigest> = self.ctp_db.iter().map(|(id, _)| id).chain(self.archive.keys()).collect();
        let mut parts: Vec<&[u8]> = vec![b"spb/admitted/v1"];
        parts.extend(ids.into_iter().map(|id| id.as_bytes().as_slice()));
        hash_parts(&parts)
    }

    fn period_of(&self, t: Tick) -> u64 {
        t / self.config.consensus_period
    }

    /// Produces a block if the DTC schedule allows it: the random wait for
    /// this period has elapsed and no block was mined in it yet. The next
    /// wakeup is drawn uniformly from the following period.
    pub fn mine_block<R: Rng>(&mut self, now: Tick, rng: &mut R) -> Option<Block> {
        let period = self.period_of(now);
        if period != self.current_period {
            self.current_period = period;
            self.blocks_this_period = 0;
        }
        if now < self.next_mine_at
            || self.blocks_this_period > 0
            || self.state().last_mined_period(&self.public()) == Some(period)
        {
            return None;
        }

        let parent = self.chain.tip_hash();
        let height = self.chain.height() + 1;
        let mut state = self.state().clone();
        let mut included = Vec::new();
        let mut settled_here = BTreeSet::new();
        let mut settlements = Vec::new();
        for tx in std::mem::take(&mut self.mempool) {
            match apply_tx(&mut state, &tx, &self.ctp_db, &self.archive, &self.config, now, height) {
                Ok(s) => {
                    if let Some(s) = s {
                        settled_here.insert(s.ctp_id);
                        settlements.push(s);
                    }
                    included.push(tx);
                }
                Err(_) => {
                    self.mempool_ids.remove(&tx.id());
                }
            }
        }
        self.mempool_ids.clear();
        state.record_mined(self.public(), period);

        let ctp_hash = self.ctp_view(now, &settled_here);
        let block = Block::new_signed(height, parent, ctp_hash, now, included, &self.keys);
        let hash = block.hash();
        self.adopt(block.clone(), hash, state, settlements, now);

        self.blocks_this_period = 1;
        let p = self.config.consensus_period;
        self.next_mine_at = (period + 1) * p + rng.gen_range(0..p);
        self.stats.blocks_mined += 1;
        Some(block)
    }

    /// Validates `block` against its parent's state and stores it, moving the
    /// tip if the block wins fork choice.
    pub fn apply_block(&mut self, block: Block, now: Tick) -> Result<ApplyOutcome, BlockRejection> {
        let hash = block.hash();
        if self.chain.contains(&hash) {
            return Ok(ApplyOutcome {
                already_known: true,
                ..Default::default()
            });
        }
        match self.validate_block(&block, now) {
            Ok((state, settlements)) => Ok(self.adopt(block, hash, state, settlements, now)),
            Err(e) => {
                self.stats.blocks_rejected += 1;
                Err(e)
            }
        }
    }

    fn validate_block(&self, block: &Block, now: Tick) -> Result<(ChainState, Vec<Settlement>), BlockRejection> {
        if !block.signature_valid() {
            return Err(BlockRejection::BadMinerSignature);
        }
        let parent_state = self
            .chain
            .state_at(&block.prev_hash)
            .ok_or(BlockRejection::UnknownParent)?;
        let parent_height = self.chain.height_of(&block.prev_hash).unwrap();
        if block.height != parent_height + 1 {
            return Err(BlockRejection::BadHeight {
                parent: parent_height,
                got: block.height,
            });
        }
        let parent_ts = self.chain.get(&block.prev_hash).map_or(0, |b| b.block.timestamp);
        if block.timestamp < parent_ts || block.timestamp > now {
            return Err(BlockRejection::BadTimestamp);
        }
        let period = self.period_of(block.timestamp);
        if parent_state.last_mined_period(&block.miner_pk) == Some(period) {
            return Err(BlockRejection::PeriodQuotaExceeded(period));
        }
        let mut state = parent_state.clone();
        let mut settlements = Vec::new();
        for (index, tx) in block.txs.iter().enumerate() {
            let settled = apply_tx(
                &mut state,
                tx,
                &self.ctp_db,
                &self.archive,
                &self.config,
                block.timestamp,
                block.height,
            )
            .map_err(|reason| BlockRejection::InvalidTransaction { index, reason })?;
            settlements.extend(settled);
        }
        state.record_mined(block.miner_pk, period);
        Ok((state, settlements))
    }

    fn adopt(
        &mut self,
        block: Block,
        hash: HashDigest,
        state: ChainState,
        settlements: Vec<Settlement>,
        now: Tick,
    ) -> ApplyOutcome {
        self.journal.push(DumpRecord::Block {
            at: now,
            block: block.clone(),
        });
        let prev = block.prev_hash;
        let (ts, header_hash) = (block.timestamp, block.ctp_hash);
        self.chain.insert(block, hash, state);
        self.stats.blocks_applied += 1;
        let mut outcome = ApplyOutcome {
            settlements,
            ..Default::default()
        };
        if !self.chain.is_better_than_tip(&hash) {
            return outcome;
        }
        let old_tip = self.chain.tip_hash();
        if prev == old_tip {
            self.connect(&hash);
        } else {
            let (leaving, joining) = self.chain.branch_diff(&old_tip, &hash);
            for h in leaving.iter().rev() {
                self.disconnect(h, now);
            }
            for h in &joining {
                self.connect(h);
            }
            self.stats.reorgs += 1;
            outcome.reorged = true;
        }
        self.chain.set_tip(hash);
        outcome.became_tip = true;
        let matches = header_hash == self.ctp_view(ts, &BTreeSet::new());
        self.stats.ctp_hash_checks += 1;
        if !matches {
            self.stats.ctp_hash_mismatches += 1;
        }
        outcome.ctp_hash_matches = Some(matches);
        outcome
    }

    /// Moves settled CTPs out of the database and drops mined txs from the mempool.
    fn connect(&mut self, hash: &HashDigest) {
        let block = self.chain.get(hash).expect("stored").block.clone();
        for tx in &block.txs {
            let id = tx.id();
            if self.mempool_ids.remove(&id) {
                self.mempool.retain(|t| t.id() != id);
            }
            if let Transaction::Erc(erc) = tx {
                if let Some(entry) = self.ctp_db.remove(&erc.ctp_id) {
                    self.archive.insert(erc.ctp_id, (entry, Removal::Settled));
                } else if let Some((_, why)) = self.archive.get_mut(&erc.ctp_id) {
                    if *why == Removal::Expired {
                        self.stats.ctps_expired -= 1;
                    }
                    *why = Removal::Settled;
                }
                self.stats.ctps_settled += 1;
            }
        }
    }

    /// Undoes [`Self::connect`] for a block leaving the best chain.
    fn disconnect(&mut self, hash: &HashDigest, now: Tick) {
        let block = self.chain.get(hash).expect("stored").block.clone();
        for tx in block.txs.iter().rev() {
            if let Transaction::Erc(erc) = tx {
                if let Some((entry, _)) = self.archive.remove(&erc.ctp_id) {
                    if entry.ctp.expiry_time > now {
                        self.ctp_db.insert(entry.ctp, entry.inserted_at);
                    } else {
                        self.archive.insert(erc.ctp_id, (entry, Removal::Expired));
                        self.stats.ctps_expired += 1;
                    }
                }
                self.stats.ctps_settled -= 1;
            }
        }
        for tx in &block.txs {
            if self.mempool_ids.insert(tx.id()) {
                self.mempool.push(tx.clone());
            }
        }
    }

    /// Everything needed to replay this miner's view offline.
    pub fn chain_dump(&self, end_tick: Tick) -> ChainDump {
        ChainDump {
            config: (*self.config).clone(),
            records: self.journal.clone(),
            end_tick,
        }
    }
}

fn apply_tx(
    state: &mut ChainState,
    tx: &Transaction,
    ctp_db: &CtpDatabase,
    archive: &BTreeMap<HashDigest, (CtpEntry, Removal)>,
    config: &LedgerConfig,
    block_time: Tick,
    height: u64,
) -> Result<Option<Settlement>, Rejection> {
    match tx {
        Transaction::Genesis(g) => state.apply_genesis(g, config).map(|_| None),
        Transaction::SupplyEnergy(s) => state.apply_supply(s).map(|_| None),
        Transaction::Erc(erc) => {
            let lookup = |id: &HashDigest| {
                ctp_db
                    .get(id)
                    .or_else(|| archive.get(id).map(|(e, _)| e))
                    .filter(|e| e.ctp.expiry_time > block_time)
                    .map(|e| &e.ctp)
            };
            state.apply_erc(erc, lookup, config, height).map(Some)
        }
        other => Err(Rejection::NotMineable(other.kind())),
    }
}
