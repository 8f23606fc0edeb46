//! Undetectable nothing-at-stake through account splitting.
//!
//! Each round draws a fresh seed. A single account of stake `V` waits
//! `Δ = d_s |ln u| / V`; the split set waits for the first of its members,
//! `min_i Δ_i`. Both are `Exp(V / d_s)`, so the network cannot tell them
//! apart, and members that each extend only one fork leave no evidence.

use serde::Serialize;

use super::{invalid, AttackError};
use crate::chain::{Block, BlockId, BlockTree, ChainRules, Provenance};
use crate::crypto::{sign_seed, AccountId, Oracle};
use crate::difficulty::DifficultyRule;
use crate::forging::{build_pow_block, forge_pos_block, pos_delay, pos_ticket, MinerContext, StakerContext};
use crate::ledger::Ledger;
use crate::slashing;
use crate::stats::{ks_critical_one, ks_critical_two, ks_statistic, ks_two_sample, mean};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStakeConfig {
    pub stake: u64,
    /// Stakes of the split accounts; they must sum to `stake`.
    pub splits: Vec<u64>,
    pub rounds: u64,
    pub d_s: f64,
    pub seed: u64,
}

impl SplitStakeConfig {
    /// `stake` split as evenly as integers allow into `k` accounts.
    pub fn even(stake: u64, k: u64, rounds: u64) -> Result<Self, AttackError> {
        if k == 0 {
            return Err(invalid("k", "at least one account is needed"));
        }
        if k > stake {
            return Err(invalid("k", format!("cannot split {stake} into {k} non-empty accounts")));
        }
        let splits = (0..k).map(|i| stake / k + u64::from(i < stake % k)).collect();
        Ok(SplitStakeConfig {
            stake,
            splits,
            rounds,
            d_s: 20.0,
            seed: 0,
        })
    }

    fn validate(&self) -> Result<(), AttackError> {
        if self.splits.is_empty() {
            return Err(invalid("k", "at least one account is needed"));
        }
        if self.splits.contains(&0) {
            return Err(invalid("splits", "every account needs stake"));
        }
        if self.splits.iter().sum::<u64>() != self.stake {
            return Err(invalid("splits", format!("must sum to {}", self.stake)));
        }
        if !(self.d_s > 0.0) {
            return Err(invalid("d_s", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStakeReport {
    pub config: SplitStakeConfig,
    pub mean_single: f64,
    pub mean_split: f64,
    /// Two-sample KS statistic, single vs split.
    pub ks_two_sample: f64,
    pub ks_two_sample_critical: f64,
    /// One-sample KS statistics against `Exp(V / d_s)`.
    pub ks_single_vs_exp: f64,
    pub ks_split_vs_exp: f64,
    pub ks_one_sample_critical: f64,
    /// Evidence against split accounts that each extended one of two forks.
    pub split_evidence: usize,
    /// Evidence against one account extending both forks (positive control).
    pub single_evidence: usize,
}

impl SplitStakeReport {
    pub fn indistinguishable(&self) -> bool {
        self.ks_two_sample < self.ks_two_sample_critical
    }
}

const SINGLE: AccountId = AccountId(1);
const FIRST_SPLIT: u64 = 100;

pub fn run_split_stake_nas(cfg: &SplitStakeConfig) -> Result<SplitStakeReport, AttackError> {
    cfg.validate()?;
    let oracle = Oracle::new(cfg.seed);
    let single_key = oracle.keypair(SINGLE);
    let split_keys: Vec<_> = (0..cfg.splits.len() as u64)
        .map(|i| oracle.keypair(AccountId(FIRST_SPLIT + i)))
        .collect();
    let delay = |seed, v: u64| {
        pos_delay(&oracle, &seed, cfg.d_s, v as f64)
            .expect("validated difficulty")
            .expect("positive stake")
    };

    let mut single = Vec::with_capacity(cfg.rounds as usize);
    let mut split = Vec::with_capacity(cfg.rounds as usize);
    for r in 0..cfg.rounds {
        let mut pre = b"unity/round/".to_vec();
        pre.extend_from_slice(&r.to_le_bytes());
        let seed_r = oracle.hash(&pre);
        single.push(delay(sign_seed(&seed_r, &single_key), cfg.stake));
        let first = split_keys
            .iter()
            .zip(&cfg.splits)
            .map(|(k, &v)| delay(sign_seed(&seed_r, k), v))
            .fold(f64::INFINITY, f64::min);
        split.push(first);
    }

    let rate = cfg.stake as f64 / cfg.d_s;
    let cdf = |x: f64| 1.0 - (-rate * x).exp();
    let n = single.len();
    let (split_evidence, single_evidence) = fork_evidence(cfg, &oracle);
    Ok(SplitStakeReport {
        config: cfg.clone(),
        mean_single: mean(&single),
        mean_split: mean(&split),
        ks_two_sample: ks_two_sample(&single, &split),
        ks_two_sample_critical: ks_critical_two(n, n),
        ks_single_vs_exp: ks_statistic(&single, cdf),
        ks_split_vs_exp: ks_statistic(&split, cdf),
        ks_one_sample_critical: ks_critical_one(n),
        split_evidence,
        single_evidence,
    })
}

/// Two PoW forks off genesis. Split members alternate between forks, each
/// forging once; the single account forges on both in a separate tree.
fn fork_evidence(cfg: &SplitStakeConfig, oracle: &Oracle) -> (usize, usize) {
    let rules = ChainRules::new(DifficultyRule::Fixed { pow: 1.0, pos: cfg.d_s }, f64::INFINITY);
    let mut ledger = Ledger::new(1, 1).expect("valid delays");
    ledger.credit_active(SINGLE, cfg.stake);
    for (i, &v) in cfg.splits.iter().enumerate() {
        ledger.credit_active(AccountId(FIRST_SPLIT + i as u64), v);
    }

    let two_forks = || {
        let mut tree = BlockTree::new(Block::genesis(oracle.genesis_seed(), 0.0), rules);
        let g = tree.genesis_id();
        let tips: Vec<BlockId> = [1.0, 2.0]
            .iter()
            .enumerate()
            .map(|(i, &ts)| {
                let miner = MinerContext {
                    account: AccountId(10_000 + i as u64),
                    hash_power: 1.0,
                };
                let b = build_pow_block(&tree, &g, &miner, ts, Vec::new(), Provenance::Honest).expect("genesis stored");
                let id = b.id;
                tree.import(b, ts).expect("valid PoW block");
                id
            })
            .collect();
        (tree, tips)
    };
    let forge = |tree: &mut BlockTree, tip: &mut BlockId, account: AccountId| {
        let staker = StakerContext::new(oracle.keypair(account));
        let ticket = pos_ticket(tree, tip, &staker, oracle, &ledger)
            .expect("tip stored")
            .expect("staker has power");
        let parent = tree.block(tip).expect("stored").clone();
        let b = forge_pos_block(&parent, &ticket, ticket.eligible_at, Vec::new(), Provenance::Adversarial)
            .expect("adversarial forging never waits");
        *tip = b.id;
        tree.import(b, ticket.eligible_at).expect("valid PoS block");
    };

    let (mut tree, mut tips) = two_forks();
    for i in 0..cfg.splits.len() {
        forge(&mut tree, &mut tips[i % 2], AccountId(FIRST_SPLIT + i as u64));
    }
    let split_evidence = slashing::detect_all(&tree.dump()).len();

    let (mut tree, mut tips) = two_forks();
    for tip in &mut tips {
        forge(&mut tree, tip, SINGLE);
    }
    let single_evidence = slashing::detect_all(&tree.dump()).len();
    (split_evidence, single_evidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_zero_rejected() {
        assert!(SplitStakeConfig::even(100, 0, 10).is_err());
    }

    #[test]
    fn even_split_sums() {
        let c = SplitStakeConfig::even(100, 7, 1).unwrap();
        assert_eq!(c.splits.iter().sum::<u64>(), 100);
        assert_eq!(c.splits[0], 15);
        assert_eq!(c.splits[6], 14);
    }

    #[test]
    fn k_one_is_same_distribution() {
        let r = run_split_stake_nas(&SplitStakeConfig::even(100, 1, 20_000).unwrap()).unwrap();
        assert!(r.indistinguishable());
        assert_eq!(r.split_evidence, 0);
    }

    #[test]
    fn ten_way_split_is_invisible() {
        let r = run_split_stake_nas(&SplitStakeConfig::even(100, 10, 100_000).unwrap()).unwrap();
        assert!(r.indistinguishable(), "{r:?}");
        assert!(r.ks_split_vs_exp < r.ks_one_sample_critical);
        assert!((r.mean_split / (20.0 / 100.0) - 1.0).abs() < 0.02);
        assert_eq!(r.split_evidence, 0);
        assert!(r.single_evidence > 0);
    }

    #[test]
    fn uneven_split_is_invisible() {
        let cfg = SplitStakeConfig {
            splits: vec![50, 30, 15, 5],
            ..SplitStakeConfig::even(100, 1, 50_000).unwrap()
        };
        let r = run_split_stake_nas(&cfg).unwrap();
        assert!(r.indistinguishable(), "{r:?}");
        assert_eq!(r.split_evidence, 0);
    }

    #[test]
    fn bad_sum_rejected() {
        let cfg = SplitStakeConfig {
            splits: vec![50, 30],
            ..SplitStakeConfig::even(100, 1, 10).unwrap()
        };
        assert!(run_split_stake_nas(&cfg).is_err());
    }
}
