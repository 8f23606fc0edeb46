//! PoW and PoS block production in closed form.
//!
//! Mining is a Poisson process: the time to a solution is exponential with
//! rate `hash_power / d_w`, so a miner draws the solve time directly instead
//! of hashing in a loop. Staking is deterministic given the seed chain: the
//! staker signs the last PoS seed, hashes the result, and becomes eligible
//! `d_s * |ln u| / V` seconds after the last PoS block.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::chain::{Block, BlockCheck, BlockId, BlockKind, BlockTemplate, BlockTree, Provenance, TreeEntry};
use crate::crypto::{sign_seed, AccountId, Digest, KeyPair, Oracle};
use crate::ledger::{StakeView, Transaction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForgeError {
    #[error("difficulty must be positive, got {0}")]
    NonPositiveDifficulty(f64),
    #[error("hash power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("account {0} has no voting power")]
    NotAStaker(AccountId),
    #[error("not eligible until {eligible_at}, now {now}")]
    NotEligible { eligible_at: f64, now: f64 },
    #[error("unknown parent {0:?}")]
    UnknownParent(BlockId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinerContext {
    pub account: AccountId,
    pub hash_power: f64,
}

#[derive(Debug, Clone)]
pub struct StakerContext {
    pub key: KeyPair,
}

impl StakerContext {
    pub fn new(key: KeyPair) -> Self {
        StakerContext { key }
    }

    pub fn account(&self) -> AccountId {
        self.key.public()
    }
}

/// Seconds until `miner` solves a block at difficulty `d_w`.
pub fn pow_solve_time<R: Rng + ?Sized>(miner: &MinerContext, d_w: f64, rng: &mut R) -> Result<f64, ForgeError> {
    if !(d_w > 0.0) {
        return Err(ForgeError::NonPositiveDifficulty(d_w));
    }
    if !(miner.hash_power > 0.0) {
        return Err(ForgeError::NonPositivePower(miner.hash_power));
    }
    let exp = Exp::new(miner.hash_power / d_w).map_err(|_| ForgeError::NonPositiveDifficulty(d_w))?;
    Ok(exp.sample(rng))
}

/// `d_s * |ln unit| / V`, or `None` when `v == 0` (not a staker).
pub fn pos_delay_from_unit(unit: f64, d_s: f64, v: f64) -> Result<Option<f64>, ForgeError> {
    if !(d_s > 0.0) {
        return Err(ForgeError::NonPositiveDifficulty(d_s));
    }
    if v <= 0.0 {
        return Ok(None);
    }
    Ok(Some(d_s * unit.ln().abs() / v))
}

/// Delay for a signed `seed`: the oracle hash of the seed fixes the unit.
pub fn pos_delay(oracle: &Oracle, seed: &Digest, d_s: f64, v: f64) -> Result<Option<f64>, ForgeError> {
    pos_delay_from_unit(oracle.hash(seed.as_bytes()).unit(), d_s, v)
}

/// A staker's right to extend a particular chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosTicket {
    pub account: AccountId,
    pub seed: Digest,
    pub difficulty: f64,
    pub delay: f64,
    /// Timestamp the block must carry.
    pub eligible_at: f64,
    pub last_pos: BlockId,
}

/// Computes the ticket for `staker` extending `parent`, reading voting power
/// at the parent height. `None` means zero voting power.
pub fn pos_ticket(
    tree: &BlockTree,
    parent: &BlockId,
    staker: &StakerContext,
    oracle: &Oracle,
    stake: &dyn StakeView,
) -> Result<Option<PosTicket>, ForgeError> {
    let entry = tree.entry(parent).ok_or(ForgeError::UnknownParent(*parent))?;
    let v = stake.voting_power(staker.account(), entry.block.height) as f64;
    ticket_with_power(tree, entry, &staker.key, oracle, v)
}

fn ticket_with_power(
    tree: &BlockTree,
    parent: &TreeEntry,
    key: &KeyPair,
    oracle: &Oracle,
    v: f64,
) -> Result<Option<PosTicket>, ForgeError> {
    let last = tree.last_pos_block(&parent.block.id).expect("parent is stored");
    let prev_seed = last.seed.expect("PoS and genesis blocks carry seeds");
    let seed = sign_seed(&prev_seed, key);
    let difficulty = tree.expected_difficulty(&parent.block.id, BlockKind::Pos);
    Ok(pos_delay(oracle, &seed, difficulty, v)?.map(|delay| PosTicket {
        account: key.public(),
        seed,
        difficulty,
        delay,
        eligible_at: last.timestamp + delay,
        last_pos: last.id,
    }))
}

/// Builds the PoS block for `ticket` on `parent`.
///
/// Honest producers must wait until the ticket's eligibility time. Adversarial
/// producers may publish early; the timestamp is forced either way.
pub fn forge_pos_block(
    parent: &Block,
    ticket: &PosTicket,
    now: f64,
    txs: Vec<Transaction>,
    provenance: Provenance,
) -> Result<Block, ForgeError> {
    if provenance == Provenance::Honest && now < ticket.eligible_at {
        return Err(ForgeError::NotEligible {
            eligible_at: ticket.eligible_at,
            now,
        });
    }
    Ok(Block::seal(BlockTemplate {
        parent: parent.id,
        kind: BlockKind::Pos,
        difficulty: ticket.difficulty,
        timestamp: ticket.eligible_at,
        height: parent.height + 1,
        producer: ticket.account,
        seed: Some(ticket.seed),
        txs,
        provenance,
    }))
}

/// Builds the PoW block solved at `solve_time` on `parent`.
pub fn build_pow_block(
    tree: &BlockTree,
    parent: &BlockId,
    miner: &MinerContext,
    solve_time: f64,
    txs: Vec<Transaction>,
    provenance: Provenance,
) -> Result<Block, ForgeError> {
    let p = tree.block(parent).ok_or(ForgeError::UnknownParent(*parent))?;
    Ok(Block::seal(BlockTemplate {
        parent: *parent,
        kind: BlockKind::Pow,
        difficulty: tree.expected_difficulty(parent, BlockKind::Pow),
        timestamp: solve_time,
        height: p.height + 1,
        producer: miner.account,
        seed: None,
        txs,
        provenance,
    }))
}

/// Validator-side check that a PoS block continues its producer's seed chain
/// and carries the forced timestamp.
///
/// The simulated signature is a keyed PRF, so the verifier holds the key
/// registry instead of public keys.
pub struct SeedChainCheck<'a> {
    pub oracle: &'a Oracle,
    pub keys: &'a HashMap<AccountId, KeyPair>,
    pub stake: &'a dyn StakeView,
}

impl BlockCheck for SeedChainCheck<'_> {
    fn check(&self, tree: &BlockTree, parent: &TreeEntry, block: &Block) -> Result<(), String> {
        if block.kind != BlockKind::Pos {
            return Ok(());
        }
        let key = self
            .keys
            .get(&block.producer)
            .ok_or_else(|| format!("unknown staker {}", block.producer))?;
        let v = self.stake.voting_power(block.producer, parent.block.height) as f64;
        let ticket = ticket_with_power(tree, parent, key, self.oracle, v)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("staker {} has no voting power", block.producer))?;
        if block.seed != Some(ticket.seed) {
            return Err(format!(
                "seed does not continue the seed chain through {}",
                ticket.last_pos.short()
            ));
        }
        if block.timestamp != ticket.eligible_at {
            return Err(format!(
                "timestamp {} differs from eligibility time {}",
                block.timestamp, ticket.eligible_at
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ChainRules, ImportResult};
    use crate::difficulty::DifficultyRule;
    use crate::ledger::Ledger;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_solve(hash_power: f64, d_w: f64, n: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = MinerContext {
            account: AccountId(1),
            hash_power,
        };
        (0..n).map(|_| pow_solve_time(&m, d_w, &mut rng).unwrap()).sum::<f64>() / n as f64
    }

    #[test]
    fn pow_solve_mean() {
        let m1 = mean_solve(1.0, 20.0, 1_000_000);
        assert!((m1 / 20.0 - 1.0).abs() < 0.01, "{m1}");
        let m2 = mean_solve(2.0, 20.0, 1_000_000);
        assert!((m2 / 10.0 - 1.0).abs() < 0.01, "{m2}");
        // network hash 38 at d_w = r * 2t
        let m3 = mean_solve(38.0, 38.0 * 20.0, 1_000_000);
        assert!((m3 / 20.0 - 1.0).abs() < 0.01, "{m3}");
    }

    #[test]
    fn pow_rejects_bad_difficulty() {
        let m = MinerContext {
            account: AccountId(1),
            hash_power: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pow_solve_time(&m, 0.0, &mut rng), Err(ForgeError::NonPositiveDifficulty(0.0)));
    }

    #[test]
    fn pos_delay_examples() {
        let d = pos_delay_from_unit((-1.0f64).exp(), 20.0, 2.0).unwrap().unwrap();
        assert!((d - 10.0).abs() < 1e-12);
        assert_eq!(pos_delay_from_unit(1.0, 20.0, 2.0).unwrap(), Some(0.0));
        assert_eq!(pos_delay_from_unit(0.3, 20.0, 0.0).unwrap(), None);
        let one = pos_delay_from_unit(0.3, 20.0, 4.0).unwrap().unwrap();
        let two = pos_delay_from_unit(0.3, 20.0, 8.0).unwrap().unwrap();
        assert_eq!(one, 2.0 * two);
    }

    fn staked_tree(powers: &[(u64, u64)]) -> (BlockTree, Oracle, Ledger, HashMap<AccountId, KeyPair>) {
        let oracle = Oracle::new(11);
        let tree = BlockTree::new(
            Block::genesis(oracle.genesis_seed(), 0.0),
            ChainRules::new(DifficultyRule::Fixed { pow: 1.0, pos: 7400.0 }, 15.0),
        );
        let mut ledger = Ledger::new(1, 1).unwrap();
        let mut keys = HashMap::new();
        for &(id, v) in powers {
            ledger.credit_active(AccountId(id), v);
            keys.insert(AccountId(id), oracle.keypair(AccountId(id)));
        }
        (tree, oracle, ledger, keys)
    }

    #[test]
    fn single_staker_gaps_are_exponential() {
        let (mut tree, oracle, ledger, keys) = staked_tree(&[(1, 370)]);
        let staker = StakerContext::new(keys[&AccountId(1)].clone());
        let n = 100_000;
        let mut gaps = Vec::with_capacity(n);
        let mut prev_seed = tree.block(&tree.genesis_id()).unwrap().seed.unwrap();
        for _ in 0..n {
            let tip = tree.canonical_tip();
            let t = pos_ticket(&tree, &tip, &staker, &oracle, &ledger).unwrap().unwrap();
            let b = forge_pos_block(tree.block(&tip).unwrap(), &t, t.eligible_at, vec![], Provenance::Honest).unwrap();
            // seed chains through the previous block
            assert_eq!(b.seed, Some(sign_seed(&prev_seed, &staker.key)));
            prev_seed = b.seed.unwrap();
            gaps.push(t.delay);
            let r = tree
                .import_checked(
                    b,
                    t.eligible_at,
                    &SeedChainCheck {
                        oracle: &oracle,
                        keys: &keys,
                        stake: &ledger,
                    },
                )
                .unwrap();
            assert_eq!(r, ImportResult::ExtendedCanonical);
        }
        let mean = crate::stats::mean(&gaps);
        let std = crate::stats::std_dev(&gaps);
        assert!((mean / 20.0 - 1.0).abs() < 0.01, "{mean}");
        assert!((std / mean - 1.0).abs() < 0.10, "{std}");
    }

    #[test]
    fn earlier_unit_forges_first() {
        let (tree, oracle, ledger, keys) = staked_tree(&[(1, 50), (2, 50)]);
        let g = tree.genesis_id();
        let t1 = pos_ticket(&tree, &g, &StakerContext::new(keys[&AccountId(1)].clone()), &oracle, &ledger)
            .unwrap()
            .unwrap();
        let t2 = pos_ticket(&tree, &g, &StakerContext::new(keys[&AccountId(2)].clone()), &oracle, &ledger)
            .unwrap()
            .unwrap();
        let u = |t: &PosTicket| oracle.hash(t.seed.as_bytes()).unit().ln().abs();
        assert_eq!(t1.eligible_at < t2.eligible_at, u(&t1) < u(&t2));
    }

    #[test]
    fn honest_early_forge_refused() {
        let (tree, oracle, ledger, keys) = staked_tree(&[(1, 1)]);
        let g = tree.genesis_id();
        let t = pos_ticket(&tree, &g, &StakerContext::new(keys[&AccountId(1)].clone()), &oracle, &ledger)
            .unwrap()
            .unwrap();
        let parent = tree.block(&g).unwrap();
        let early = t.eligible_at - 1.0;
        assert!(matches!(
            forge_pos_block(parent, &t, early, vec![], Provenance::Honest),
            Err(ForgeError::NotEligible { .. })
        ));
        let b = forge_pos_block(parent, &t, early, vec![], Provenance::Adversarial).unwrap();
        assert_eq!(b.timestamp, t.eligible_at);
    }

    #[test]
    fn zero_power_has_no_ticket() {
        let (tree, oracle, ledger, _) = staked_tree(&[(1, 10)]);
        let s = StakerContext::new(oracle.keypair(AccountId(9)));
        assert_eq!(pos_ticket(&tree, &tree.genesis_id(), &s, &oracle, &ledger).unwrap(), None);
    }

    #[test]
    fn seed_check_rejects_tampered_blocks() {
        let (mut tree, oracle, ledger, keys) = staked_tree(&[(1, 10)]);
        let g = tree.genesis_id();
        let s = StakerContext::new(keys[&AccountId(1)].clone());
        let t = pos_ticket(&tree, &g, &s, &oracle, &ledger).unwrap().unwrap();
        let check = SeedChainCheck {
            oracle: &oracle,
            keys: &keys,
            stake: &ledger,
        };
        let mut bad = t;
        bad.eligible_at += 0.5;
        let b = forge_pos_block(tree.block(&g).unwrap(), &bad, 1e9, vec![], Provenance::Honest).unwrap();
        assert!(tree.import_checked(b, 1e9, &check).is_err());
        let mut bad = t;
        bad.seed = Digest::of(b"other");
        let b = forge_pos_block(tree.block(&g).unwrap(), &bad, 1e9, vec![], Provenance::Honest).unwrap();
        assert!(tree.import_checked(b, 1e9, &check).is_err());
        let b = forge_pos_block(tree.block(&g).unwrap(), &t, 1e9, vec![], Provenance::Honest).unwrap();
        assert!(tree.import_checked(b, 1e9, &check).is_ok());
    }

    #[test]
    fn pow_block_construction() {
        let (tree, _, _, _) = staked_tree(&[]);
        let g = tree.genesis_id();
        let m = MinerContext {
            account: AccountId(5),
            hash_power: 1.0,
        };
        let b = build_pow_block(&tree, &g, &m, 13.2, vec![], Provenance::Honest).unwrap();
        assert_eq!((b.height, b.kind, b.timestamp), (1, BlockKind::Pow, 13.2));
    }
}
