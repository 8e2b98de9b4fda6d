// Copyright 2026 The SPB Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::{validate_erc_with, LedgerConfig, Rejection};
use crate::crypto::{ca_verify, HashDigest, PublicKey};
use crate::tx::{check_structure, Coins, CtpTx, ErcTx, GenesisMethod, GenesisTx, Kwh, SupplyEnergyTx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccountState {
    pub coin_balance: Coins,
    pub energy_balance: Kwh,
    /// Latest transaction of the energy account; `None` until a genesis
    /// transaction has been accepted for this key.
    pub last_tx_id: Option<HashDigest>,
}

impl AccountState {
    pub fn has_energy_account(&self) -> bool {
        self.last_tx_id.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settlement {
    pub ctp_id: HashDigest,
    pub erc_id: HashDigest,
    pub consumer: PublicKey,
    pub producer: PublicKey,
    pub price: Coins,
    pub energy_amount: Kwh,
    pub height: u64,
}

/// Ledger state after some block: balances, settled CTPs and each miner's
/// most recent consensus period.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChainState {
    accounts: BTreeMap<PublicKey, AccountState>,
    settled: BTreeMap<HashDigest, Settlement>,
    last_mined_period: BTreeMap<PublicKey, u64>,
}

impl ChainState {
    pub fn from_config(config: &LedgerConfig) -> Self {
        let accounts = config
            .initial_coins
            .iter()
            .map(|(pk, coins)| {
                (
                    *pk,
                    AccountState {
                        coin_balance: *coins,
                        ..Default::default()
                    },
                )
            })
            .collect();
        Self {
            accounts,
            ..Default::default()
        }
    }

    pub fn accounts(&self) -> &BTreeMap<PublicKey, AccountState> {
        &self.accounts
    }

    pub fn account(&self, pk: &PublicKey) -> Option<&AccountState> {
        self.accounts.get(pk)
    }

    pub fn coin_balance(&self, pk: &PublicKey) -> Coins {
        self.accounts.get(pk).map_or(0, |a| a.coin_balance)
    }

    pub fn energy_balance(&self, pk: &PublicKey) -> Kwh {
        self.accounts.get(pk).map_or(0, |a| a.energy_balance)
    }

    pub fn last_tx_id(&self, pk: &PublicKey) -> Option<HashDigest> {
        self.accounts.get(pk).and_then(|a| a.last_tx_id)
    }

    pub fn total_coins(&self) -> u128 {
        self.accounts.values().map(|a| a.coin_balance as u128).sum()
    }

    pub fn settlements(&self) -> &BTreeMap<HashDigest, Settlement> {
        &self.settled
    }

    pub fn is_settled(&self, ctp_id: &HashDigest) -> bool {
        self.settled.contains_key(ctp_id)
    }

    pub fn last_mined_period(&self, miner: &PublicKey) -> Option<u64> {
        self.last_mined_period.get(miner).copied()
    }

    pub(crate) fn record_mined(&mut self, miner: PublicKey, period: u64) {
        self.last_mined_period.insert(miner, period);
    }

    pub fn apply_genesis(&mut self, tx: &GenesisTx, config: &LedgerConfig) -> Result<(), Rejection> {
        check_structure(&tx.clone().into())?;
        if self.account(&tx.pk).is_some_and(AccountState::has_energy_account) {
            return Err(Rejection::AccountExists);
        }
        check_genesis_evidence(tx, config)?;
        let account = self.accounts.entry(tx.pk).or_default();
        account.last_tx_id = Some(tx.id());
        Ok(())
    }

    pub fn apply_supply(&mut self, tx: &SupplyEnergyTx) -> Result<(), Rejection> {
        check_structure(&tx.clone().into())?;
        let account = self.accounts.get_mut(&tx.pk).ok_or(Rejection::UnknownAccount)?;
        match account.last_tx_id {
            None => return Err(Rejection::UnknownAccount),
            Some(last) if last != tx.p_t_id => return Err(Rejection::ChainBreak),
            Some(_) => {}
        }
        account.energy_balance = account
            .energy_balance
            .checked_add(tx.energy_amount)
            .ok_or(Rejection::BalanceOverflow)?;
        account.last_tx_id = Some(tx.t_id);
        Ok(())
    }

    /// Validates the ERC (steps a to e) and executes the settlement rule:
    /// the consumer's committed price moves to the payee and the payee's
    /// energy account is debited by the contracted amount.
    pub(crate) fn apply_erc<'a>(
        &mut self,
        erc: &ErcTx,
        lookup: impl FnOnce(&HashDigest) -> Option<&'a CtpTx>,
        config: &LedgerConfig,
        height: u64,
    ) -> Result<Settlement, Rejection> {
        if self.is_settled(&erc.ctp_id) {
            return Err(Rejection::AlreadySettled);
        }
        let mut found = None;
        validate_erc_with(
            erc,
            |id| {
                found = lookup(id);
                found
            },
            &config.manufacturer_ca,
        )
        .map_err(Rejection::InvalidErc)?;
        check_structure(&erc.clone().into())?;
        let ctp = found.expect("step (a) passed");
        self.settle(erc, ctp, height)
    }

    pub fn settle(&mut self, erc: &ErcTx, ctp: &CtpTx, height: u64) -> Result<Settlement, Rejection> {
        if self.is_settled(&ctp.t_id) {
            return Err(Rejection::AlreadySettled);
        }
        if self.coin_balance(&ctp.pk) < ctp.price {
            return Err(Rejection::InsufficientFunds);
        }
        let producer = self.accounts.get(&ctp.payee_pk).ok_or(Rejection::UnknownPayee)?;
        if !producer.has_energy_account() {
            return Err(Rejection::UnknownPayee);
        }
        if producer.energy_balance < ctp.energy_amount {
            return Err(Rejection::InsufficientEnergy {
                available: producer.energy_balance,
                requested: ctp.energy_amount,
            });
        }
        self.accounts.get_mut(&ctp.pk).unwrap().coin_balance -= ctp.price;
        let producer = self.accounts.get_mut(&ctp.payee_pk).unwrap();
        producer.coin_balance += ctp.price;
        producer.energy_balance -= ctp.energy_amount;
        let record = Settlement {
            ctp_id: ctp.t_id,
            erc_id: erc.t_id,
            consumer: ctp.pk,
            producer: ctp.payee_pk,
            price: ctp.price,
            energy_amount: ctp.energy_amount,
            height,
        };
        self.settled.insert(ctp.t_id, record.clone());
        Ok(record)
    }
}

pub(crate) fn check_genesis_evidence(tx: &GenesisTx, config: &LedgerConfig) -> Result<(), Rejection> {
    let ok = match tx.method {
        GenesisMethod::CoinBurn => tx.burned_amount().is_some_and(|a| a >= config.burn_threshold),
        GenesisMethod::AuthorityCertificate => tx
            .certificate()
            .is_some_and(|c| c.subject_pk == tx.pk && ca_verify(&c, &config.distributor_ca)),
    };
    if ok {
        Ok(())
    } else {
        Err(Rejection::BadEvidence)
    }
}
