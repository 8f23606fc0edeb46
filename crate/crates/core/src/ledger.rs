//! Account balances and the stake lifecycle.
//!
//! Coins move through four states:
//!
//! ```text
//!   liquid --lock--> maturing --(T heights)--> active --unlock--> withdrawing --(W heights)--> liquid
//! ```
//!
//! Only active stake counts as voting power. Maturity is boolean: a maturing
//! bucket contributes nothing until `lock_height + T`, then all of it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::AccountId;

pub type Amount = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub amount: Amount,
    /// Height at which the bucket changes state.
    pub at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeAccount {
    pub liquid: Amount,
    pub active: Amount,
    pub maturing: Vec<Bucket>,
    pub withdrawing: Vec<Bucket>,
}

impl StakeAccount {
    pub fn total(&self) -> Amount {
        self.liquid
            + self.active
            + self.maturing.iter().map(|b| b.amount).sum::<Amount>()
            + self.withdrawing.iter().map(|b| b.amount).sum::<Amount>()
    }

    pub fn voting_power(&self, height: u64) -> Amount {
        self.active
            + self
                .maturing
                .iter()
                .filter(|b| b.at <= height)
                .map(|b| b.amount)
                .sum::<Amount>()
    }

    pub fn liquid_at(&self, height: u64) -> Amount {
        self.liquid
            + self
                .withdrawing
                .iter()
                .filter(|b| b.at <= height)
                .map(|b| b.amount)
                .sum::<Amount>()
    }

    /// Moves buckets whose height has been reached into their next state.
    fn settle(&mut self, height: u64) {
        let (done, pending): (Vec<Bucket>, Vec<Bucket>) = self.maturing.iter().partition(|b| b.at <= height);
        self.active += done.iter().map(|b| b.amount).sum::<Amount>();
        self.maturing = pending;
        let (done, pending): (Vec<Bucket>, Vec<Bucket>) = self.withdrawing.iter().partition(|b| b.at <= height);
        self.liquid += done.iter().map(|b| b.amount).sum::<Amount>();
        self.withdrawing = pending;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transaction {
    Transfer { from: AccountId, to: AccountId, amount: Amount },
    Lock { who: AccountId, amount: Amount },
    Unlock { who: AccountId, amount: Amount },
}

impl Transaction {
    pub(crate) fn encode_into(&self, out: &mut Vec<u8>) {
        let (tag, a, b, amount) = match *self {
            Transaction::Transfer { from, to, amount } => (0u8, from.0, to.0, amount),
            Transaction::Lock { who, amount } => (1, who.0, 0, amount),
            Transaction::Unlock { who, amount } => (2, who.0, 0, amount),
        };
        out.push(tag);
        out.extend_from_slice(&a.to_le_bytes());
        out.extend_from_slice(&b.to_le_bytes());
        out.extend_from_slice(&amount.to_le_bytes());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("amount must be positive")]
    ZeroAmount,
    #[error("account {account} has {available} liquid, needs {needed}")]
    InsufficientLiquid { account: AccountId, needed: Amount, available: Amount },
    #[error("account {account} has {available} active stake, needs {needed}")]
    InsufficientActive { account: AccountId, needed: Amount, available: Amount },
    #[error("maturation and withdrawal delays must be at least 1 (got T={maturation}, W={withdrawal})")]
    InvalidDelays { maturation: u64, withdrawal: u64 },
}

/// Outcome of one transaction inside [`Ledger::apply_transactions`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxOutcome {
    Applied,
    Rejected(LedgerError),
}

/// Read access to voting power, as used by PoS eligibility.
pub trait StakeView {
    fn voting_power(&self, account: AccountId, height: u64) -> Amount;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    accounts: BTreeMap<AccountId, StakeAccount>,
    maturation: u64,
    withdrawal: u64,
}

impl Ledger {
    pub fn new(maturation: u64, withdrawal: u64) -> Result<Self, LedgerError> {
        if maturation < 1 || withdrawal < 1 {
            return Err(LedgerError::InvalidDelays { maturation, withdrawal });
        }
        Ok(Ledger {
            accounts: BTreeMap::new(),
            maturation,
            withdrawal,
        })
    }

    pub fn maturation(&self) -> u64 {
        self.maturation
    }

    pub fn withdrawal(&self) -> u64 {
        self.withdrawal
    }

    pub fn account(&self, id: AccountId) -> Option<&StakeAccount> {
        self.accounts.get(&id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&AccountId, &StakeAccount)> {
        self.accounts.iter()
    }

    /// Mints `amount` into liquid balance (genesis allocation, block reward).
    pub fn credit(&mut self, id: AccountId, amount: Amount) {
        self.accounts.entry(id).or_default().liquid += amount;
    }

    /// Genesis stake that is active from height 0.
    pub fn credit_active(&mut self, id: AccountId, amount: Amount) {
        self.accounts.entry(id).or_default().active += amount;
    }

    pub fn total_supply(&self) -> Amount {
        self.accounts.values().map(StakeAccount::total).sum()
    }

    pub fn liquid_at(&self, id: AccountId, height: u64) -> Amount {
        self.accounts.get(&id).map_or(0, |a| a.liquid_at(height))
    }

    pub fn voting_power(&self, id: AccountId, height: u64) -> Amount {
        self.accounts.get(&id).map_or(0, |a| a.voting_power(height))
    }

    pub fn lock(&mut self, id: AccountId, amount: Amount, height: u64) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let maturation = self.maturation;
        let acct = self.settled(id, height);
        if acct.liquid < amount {
            return Err(LedgerError::InsufficientLiquid {
                account: id,
                needed: amount,
                available: acct.liquid,
            });
        }
        acct.liquid -= amount;
        acct.maturing.push(Bucket {
            amount,
            at: height + maturation,
        });
        Ok(())
    }

    pub fn unlock(&mut self, id: AccountId, amount: Amount, height: u64) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let withdrawal = self.withdrawal;
        let acct = self.settled(id, height);
        if acct.active < amount {
            return Err(LedgerError::InsufficientActive {
                account: id,
                needed: amount,
                available: acct.active,
            });
        }
        acct.active -= amount;
        acct.withdrawing.push(Bucket {
            amount,
            at: height + withdrawal,
        });
        Ok(())
    }

    pub fn transfer(&mut self, from: AccountId, to: AccountId, amount: Amount, height: u64) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroAmount);
        }
        let src = self.settled(from, height);
        if src.liquid < amount {
            return Err(LedgerError::InsufficientLiquid {
                account: from,
                needed: amount,
                available: src.liquid,
            });
        }
        src.liquid -= amount;
        self.accounts.entry(to).or_default().liquid += amount;
        Ok(())
    }

    /// Applies `txs` in order. A failing transaction is skipped and reported;
    /// the rest still apply.
    pub fn apply_transactions(&mut self, txs: &[Transaction], height: u64) -> Vec<TxOutcome> {
        txs.iter()
            .map(|tx| {
                let r = match *tx {
                    Transaction::Transfer { from, to, amount } => self.transfer(from, to, amount, height),
                    Transaction::Lock { who, amount } => self.lock(who, amount, height),
                    Transaction::Unlock { who, amount } => self.unlock(who, amount, height),
                };
                match r {
                    Ok(()) => TxOutcome::Applied,
                    Err(e) => TxOutcome::Rejected(e),
                }
            })
            .collect()
    }

    /// Debits up to `amount`: liquid first, then active, then locked buckets.
    /// Returns what was actually taken.
    pub fn slash(&mut self, id: AccountId, amount: Amount, height: u64) -> Amount {
        let Some(acct) = self.accounts.get_mut(&id) else {
            return 0;
        };
        acct.settle(height);
        let mut left = amount;
        let mut take = |pool: &mut Amount| {
            let t = left.min(*pool);
            *pool -= t;
            left -= t;
        };
        take(&mut acct.liquid);
        take(&mut acct.active);
        for b in acct.maturing.iter_mut().chain(acct.withdrawing.iter_mut()) {
            take(&mut b.amount);
        }
        acct.maturing.retain(|b| b.amount > 0);
        acct.withdrawing.retain(|b| b.amount > 0);
        amount - left
    }

    /// JSON snapshot: account id -> {liquid, active, maturing, withdrawing}.
    pub fn snapshot_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.accounts).expect("ledger serializes")
    }

    fn settled(&mut self, id: AccountId, height: u64) -> &mut StakeAccount {
        let acct = self.accounts.entry(id).or_default();
        acct.settle(height);
        acct
    }
}

impl StakeView for Ledger {
    fn voting_power(&self, account: AccountId, height: u64) -> Amount {
        Ledger::voting_power(self, account, height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: AccountId = AccountId(1);
    const B: AccountId = AccountId(2);

    fn ledger(t: u64, w: u64) -> Ledger {
        Ledger::new(t, w).unwrap()
    }

    #[test]
    fn rejects_zero_delays() {
        assert!(Ledger::new(0, 5).is_err());
        assert!(Ledger::new(5, 0).is_err());
    }

    #[test]
    fn lock_matures_at_inclusive_boundary() {
        let mut l = ledger(100, 50);
        l.credit(A, 80);
        l.lock(A, 50, 10).unwrap();
        assert_eq!(l.voting_power(A, 109), 0);
        assert_eq!(l.voting_power(A, 110), 50);
        assert_eq!(l.liquid_at(A, 110), 30);
    }

    #[test]
    fn lock_more_than_liquid_fails() {
        let mut l = ledger(100, 50);
        l.credit(A, 10);
        assert!(matches!(l.lock(A, 11, 0), Err(LedgerError::InsufficientLiquid { .. })));
        assert_eq!(l.lock(A, 0, 0), Err(LedgerError::ZeroAmount));
    }

    #[test]
    fn unlock_releases_after_withdrawal_delay() {
        let mut l = ledger(10, 50);
        l.credit_active(A, 30);
        l.unlock(A, 30, 200).unwrap();
        assert_eq!(l.liquid_at(A, 249), 0);
        assert_eq!(l.liquid_at(A, 250), 30);
        assert_eq!(l.unlock(A, 0, 300), Err(LedgerError::ZeroAmount));
    }

    #[test]
    fn withdrawing_stake_has_no_voting_power() {
        let mut l = ledger(10, 50);
        l.credit(A, 40);
        l.lock(A, 40, 0).unwrap();
        l.unlock(A, 40, 10).unwrap();
        assert_eq!(l.voting_power(A, 10), 0);
        assert_eq!(l.account(A).unwrap().total(), 40);
    }

    #[test]
    fn unlock_more_than_active_fails() {
        let mut l = ledger(10, 5);
        l.credit(A, 40);
        l.lock(A, 40, 0).unwrap();
        // still maturing
        assert!(matches!(l.unlock(A, 1, 5), Err(LedgerError::InsufficientActive { .. })));
    }

    #[test]
    fn voting_power_examples() {
        let l = ledger(10, 10);
        assert_eq!(l.voting_power(A, 0), 0);
        assert_eq!(l.voting_power(AccountId(99), 1_000), 0);

        let mut l = ledger(10, 10);
        for (i, s) in [160, 80, 40, 30, 20, 10, 10, 10, 10, 10].into_iter().enumerate() {
            l.credit_active(AccountId(i as u64 + 1), s);
        }
        let total: Amount = (1..=10).map(|i| l.voting_power(AccountId(i), 0)).sum();
        // 160 + 80 + 40 + 30 + 20 + 5 * 10
        assert_eq!(total, 380);
    }

    #[test]
    fn partial_maturity() {
        let mut l = ledger(20, 10);
        l.credit(A, 75);
        l.lock(A, 50, 0).unwrap();
        l.lock(A, 25, 20).unwrap();
        assert_eq!(l.voting_power(A, 30), 50);
        assert_eq!(l.voting_power(A, 40), 75);
    }

    #[test]
    fn transfers_apply_in_order_and_skip_failures() {
        let mut l = ledger(1, 1);
        l.credit(A, 10);
        let out = l.apply_transactions(&[Transaction::Transfer { from: A, to: B, amount: 10 }], 0);
        assert_eq!(out, vec![TxOutcome::Applied]);
        assert_eq!(l.liquid_at(A, 0), 0);
        assert_eq!(l.liquid_at(B, 0), 10);

        let before = l.clone();
        assert!(l.apply_transactions(&[], 5).is_empty());
        assert_eq!(l, before);

        let mut l = ledger(1, 1);
        l.credit(A, 15);
        let tx = Transaction::Transfer { from: A, to: B, amount: 10 };
        let out = l.apply_transactions(&[tx, tx], 0);
        // Sequential replay: 15 - 10 = 5 left, second needs 10.
        assert_eq!(out[0], TxOutcome::Applied);
        assert!(matches!(out[1], TxOutcome::Rejected(LedgerError::InsufficientLiquid { available: 5, .. })));
        assert_eq!(l.liquid_at(A, 0), 5);
        assert_eq!(l.liquid_at(B, 0), 10);
    }

    #[test]
    fn slash_order_liquid_then_active() {
        let mut l = ledger(5, 5);
        l.credit(A, 10);
        l.credit_active(A, 20);
        assert_eq!(l.slash(A, 15, 0), 15);
        let a = l.account(A).unwrap();
        assert_eq!((a.liquid, a.active), (0, 15));
        l.unlock(A, 5, 0).unwrap();
        // 10 active + 5 withdrawing remain; withdrawing stays slashable
        assert_eq!(l.slash(A, 100, 1), 15);
        assert_eq!(l.account(A).unwrap().total(), 0);
    }

    #[test]
    fn snapshot_shape() {
        let mut l = ledger(5, 5);
        l.credit(A, 10);
        l.lock(A, 4, 0).unwrap();
        let snap = l.snapshot_json();
        let acct = &snap["1"];
        assert_eq!(acct["liquid"], 6);
        assert_eq!(acct["active"], 0);
        assert_eq!(acct["maturing"][0]["amount"], 4);
        assert!(acct["withdrawing"].as_array().unwrap().is_empty());
    }
}
