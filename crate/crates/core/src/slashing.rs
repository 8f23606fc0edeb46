//! Evidence detection, Dunkle settlement and the public double-spend race.
//!
//! Hard evidence comes in two shapes: a staker producing two PoS blocks at the
//! same height, and a staker extending a chain of weight `w1` at time `t1`
//! and later a chain of weight `w2 <= w1` at `t2 >= t1`. Dunkle settlement
//! needs no evidence: every side-chain PoS block costs its producer `n * R`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{AttackOutcome, TrajectoryPoint};
use crate::chain::{BlockId, BlockKind};
use crate::crypto::AccountId;
use crate::dump::{DumpRecord, TreeDump};
use crate::ledger::{Amount, Ledger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvidenceKind {
    DoubleProduction,
    WeightTimestampViolation,
    Dunkle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    pub staker: AccountId,
    pub blocks: (BlockId, BlockId),
    /// `(w1, t1, w2, t2)` for weight/timestamp violations.
    pub details: Option<(f64, f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SlashingError {
    #[error("orphan probability must lie in (0, 1), got {0}")]
    ProbabilityOutOfRange(f64),
    #[error("penalty multiple must be positive, got {0}")]
    NonPositiveMultiple(f64),
}

fn pos_records(dump: &TreeDump) -> impl Iterator<Item = &DumpRecord> {
    dump.records().iter().filter(|r| r.kind == BlockKind::Pos)
}

/// One piece of evidence per `(staker, height)` holding two or more distinct
/// PoS blocks. The two earliest-arriving blocks are cited.
pub fn detect_double_production(dump: &TreeDump) -> Vec<Evidence> {
    let mut groups: BTreeMap<(AccountId, u64), Vec<BlockId>> = BTreeMap::new();
    for r in pos_records(dump) {
        let g = groups.entry((r.producer, r.height)).or_default();
        if !g.contains(&r.id) {
            g.push(r.id);
        }
    }
    groups
        .into_iter()
        .filter(|(_, ids)| ids.len() >= 2)
        .map(|((staker, _), ids)| Evidence {
            kind: EvidenceKind::DoubleProduction,
            staker,
            blocks: (ids[0], ids[1]),
            details: None,
        })
        .collect()
}

/// Evidence for every PoS block `Y` whose producer earlier (or at the same
/// timestamp) extended a chain at least as heavy as `Y`'s parent. Weight is
/// the parent's `td_w * td_s`, i.e. measured at production time.
pub fn detect_weight_timestamp_violation(dump: &TreeDump) -> Vec<Evidence> {
    let mut by_staker: BTreeMap<AccountId, Vec<(f64, f64, BlockId)>> = BTreeMap::new();
    for r in pos_records(dump) {
        let Some(parent) = dump.parent_of(r) else { continue };
        by_staker
            .entry(r.producer)
            .or_default()
            .push((parent.product(), r.timestamp, r.id));
    }
    let mut out = Vec::new();
    for (staker, mut blocks) in by_staker {
        // Time ascending; on equal time the heavier parent first, so the
        // lighter one is reported.
        blocks.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)).then(a.2.cmp(&b.2)));
        let mut heaviest: Option<(f64, f64, BlockId)> = None;
        for &(w, t, id) in &blocks {
            if let Some((w1, t1, id1)) = heaviest {
                if w1 >= w {
                    out.push(Evidence {
                        kind: EvidenceKind::WeightTimestampViolation,
                        staker,
                        blocks: (id1, id),
                        details: Some((w1, t1, w, t)),
                    });
                }
            }
            if heaviest.is_none_or(|h| w > h.0) {
                heaviest = Some((w, t, id));
            }
        }
    }
    out
}

/// Both hard-evidence detectors.
pub fn detect_all(dump: &TreeDump) -> Vec<Evidence> {
    let mut v = detect_double_production(dump);
    v.extend(detect_weight_timestamp_violation(dump));
    v
}

/// Net PoS revenue per account: `+R` per canonical PoS block, `-n R` per
/// side-chain PoS block.
pub fn dunkle_settlement<'a>(
    canonical: impl IntoIterator<Item = &'a DumpRecord>,
    side: impl IntoIterator<Item = &'a DumpRecord>,
    reward: f64,
    n: f64,
) -> BTreeMap<AccountId, f64> {
    let mut net = BTreeMap::new();
    for r in canonical.into_iter().filter(|r| r.kind == BlockKind::Pos) {
        *net.entry(r.producer).or_insert(0.0) += reward;
    }
    for r in side.into_iter().filter(|r| r.kind == BlockKind::Pos) {
        *net.entry(r.producer).or_insert(0.0) -= n * reward;
    }
    net
}

/// [`dunkle_settlement`] over a dump's canonical/side partition.
pub fn dunkle_settlement_dump(dump: &TreeDump, reward: f64, n: f64) -> BTreeMap<AccountId, f64> {
    let (canon, side) = dump.partition();
    dunkle_settlement(canon, side, reward, n)
}

/// Side-chain blocks as Dunkle evidence records (no hard proof involved).
pub fn dunkle_evidence(dump: &TreeDump) -> Vec<Evidence> {
    let (_, side) = dump.partition();
    side.into_iter()
        .filter(|r| r.kind == BlockKind::Pos)
        .map(|r| Evidence {
            kind: EvidenceKind::Dunkle,
            staker: r.producer,
            blocks: (r.id, r.parent),
            details: None,
        })
        .collect()
}

/// Largest penalty multiple `n` for which an honest staker facing orphan
/// probability `a` still expects a profit: `(1 - a) / a`.
pub fn dunkle_n_bound(a: f64) -> Result<f64, SlashingError> {
    if !(a > 0.0 && a < 1.0) {
        return Err(SlashingError::ProbabilityOutOfRange(a));
    }
    Ok((1.0 - a) / a)
}

/// Expected PoS revenue per eligibility of an honest staker: `(1 - a) R - a n R`.
pub fn dunkle_expected_revenue(a: f64, reward: f64, n: f64) -> f64 {
    (1.0 - a) * reward - a * n * reward
}

/// Debits `penalty` from each accused staker. Returns the total taken.
pub fn apply_penalties(ledger: &mut Ledger, evidence: &[Evidence], penalty: Amount, height: u64) -> Amount {
    evidence.iter().map(|e| ledger.slash(e.staker, penalty, height)).sum()
}

/// How a staker treats the attacker's public fork.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StakerPolicy {
    /// Forge on both branches whenever eligible (no slashing deterrent).
    SupportBoth,
    /// Forge only on the branch honest miners started.
    HonestOnly,
    /// Forge on whichever branch has more mining difficulty.
    FollowHashPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicDoubleSpendSetup {
    pub attacker_hash: f64,
    pub honest_hash: f64,
    pub stakers: Vec<(AccountId, f64, StakerPolicy)>,
    /// Fixed per-kind difficulties during the race.
    pub d_w: f64,
    pub d_s: f64,
    /// Weight of the shared prefix.
    pub fork_td_w: f64,
    pub fork_td_s: f64,
    pub horizon: f64,
    pub block_reward: f64,
    /// Dunkle penalty multiple, if settlement is enabled.
    pub dunkle_n: Option<f64>,
}

impl PublicDoubleSpendSetup {
    /// Ten equal stakers sharing one policy; hash shares of a unit network.
    pub fn uniform(attacker_share: f64, policy: StakerPolicy, dunkle_n: Option<f64>) -> Self {
        PublicDoubleSpendSetup {
            attacker_hash: attacker_share,
            honest_hash: 1.0 - attacker_share,
            stakers: (1..=10).map(|i| (AccountId(i), 0.1, policy)).collect(),
            d_w: 20.0,
            d_s: 20.0,
            fork_td_w: 100.0,
            fork_td_s: 100.0,
            horizon: 4000.0,
            block_reward: 1.0,
            dunkle_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublicDoubleSpendOutcome {
    pub outcome: AttackOutcome,
    pub main_blocks: u64,
    pub attacker_blocks: u64,
    /// Dunkle net staker revenue, taking the winning branch as canonical.
    pub dunkle: Option<BTreeMap<AccountId, f64>>,
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    td_w: f64,
    td_s: f64,
}

impl Branch {
    fn product(&self) -> f64 {
        self.td_w * self.td_s
    }
}

/// The public fork race at fixed difficulty.
///
/// Block arrivals are competing exponential clocks. Attacker miners always
/// extend the attacker branch; honest miners extend the heavier branch
/// (the main branch on ties); stakers follow their policy. The attacker wins
/// when its branch is strictly heavier at the horizon.
pub fn run_public_double_spend(setup: &PublicDoubleSpendSetup, seed: u64) -> PublicDoubleSpendOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Branch {
        td_w: setup.fork_td_w,
        td_s: setup.fork_td_s,
    };
    let mut br = [start, start]; // 0 = main, 1 = attacker
    let mut pos_blocks: [Vec<AccountId>; 2] = [Vec::new(), Vec::new()];
    let mut counts = [0u64; 2];
    let mut traj = vec![TrajectoryPoint {
        time: 0.0,
        attacker: br[1].product(),
        honest: br[0].product(),
    }];
    let mut crossing = None;
    let mut now = 0.0;
    loop {
        let honest_on = if br[1].product() > br[0].product() { 1 } else { 0 };
        // (rate, branch, kind, staker index)
        let mut clocks: Vec<(f64, usize, BlockKind, usize)> = Vec::new();
        if setup.attacker_hash > 0.0 {
            clocks.push((setup.attacker_hash / setup.d_w, 1, BlockKind::Pow, 0));
        }
        if setup.honest_hash > 0.0 {
            clocks.push((setup.honest_hash / setup.d_w, honest_on, BlockKind::Pow, 0));
        }
        for (i, &(_, v, policy)) in setup.stakers.iter().enumerate() {
            let rate = v / setup.d_s;
            if rate <= 0.0 {
                continue;
            }
            match policy {
                StakerPolicy::SupportBoth => {
                    clocks.push((rate, 0, BlockKind::Pos, i));
                    clocks.push((rate, 1, BlockKind::Pos, i));
                }
                StakerPolicy::HonestOnly => clocks.push((rate, 0, BlockKind::Pos, i)),
                StakerPolicy::FollowHashPower => {
                    let b = if br[1].td_w > br[0].td_w { 1 } else { 0 };
                    clocks.push((rate, b, BlockKind::Pos, i));
                }
            }
        }
        let total: f64 = clocks.iter().map(|c| c.0).sum();
        if total <= 0.0 {
            break;
        }
        now += Exp::new(total).expect("positive rate").sample(&mut rng);
        if now > setup.horizon {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        let &(_, b, kind, i) = clocks
            .iter()
            .find(|c| {
                pick -= c.0;
                pick < 0.0
            })
            .unwrap_or(clocks.last().expect("non-empty"));
        match kind {
            BlockKind::Pos => {
                br[b].td_s += setup.d_s;
                pos_blocks[b].push(setup.stakers[i].0);
            }
            _ => br[b].td_w += setup.d_w,
        }
        counts[b] += 1;
        let (a, h) = (br[1].product(), br[0].product());
        if crossing.is_none() && a > h {
            crossing = Some(now);
        }
        traj.push(TrajectoryPoint {
            time: now,
            attacker: a,
            honest: h,
        });
    }
    let won = br[1].product() > br[0].product();
    let dunkle = setup.dunkle_n.map(|n| {
        let (canon, side) = if won { (1, 0) } else { (0, 1) };
        let mut net: BTreeMap<AccountId, f64> = BTreeMap::new();
        for a in &pos_blocks[canon] {
            *net.entry(*a).or_insert(0.0) += setup.block_reward;
        }
        for a in &pos_blocks[side] {
            *net.entry(*a).or_insert(0.0) -= n * setup.block_reward;
        }
        net
    });
    PublicDoubleSpendOutcome {
        outcome: AttackOutcome {
            attacker_won: won,
            crossing_time: crossing,
            final_attacker: br[1].product(),
            final_honest: br[0].product(),
            trajectory: traj,
        },
        main_blocks: counts[0],
        attacker_blocks: counts[1],
        dunkle,
    }
}

/// Win rate of [`run_public_double_spend`] over seeds `0..trials`.
pub fn public_double_spend_win_rate(setup: &PublicDoubleSpendSetup, trials: u64, base_seed: u64) -> f64 {
    let wins: u64 = (0..trials)
        .into_par_iter()
        .map(|i| run_public_double_spend(setup, base_seed.wrapping_add(i)).outcome.attacker_won as u64)
        .sum();
    wins as f64 / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Digest;

    fn rec(id: u8, parent: u8, kind: BlockKind, producer: u64, height: u64, ts: f64, w: (f64, f64)) -> DumpRecord {
        DumpRecord {
            id: Digest::from_bytes([id; 32]),
            parent: Digest::from_bytes([parent; 32]),
            kind,
            difficulty: 1.0,
            timestamp: ts,
            height,
            producer: AccountId(producer),
            td_w: w.0,
            td_s: w.1,
        }
    }

    /// Genesis (product 1) with two branches: heavy `a` (product 8) and
    /// light `b` (product 6).
    fn forked() -> Vec<DumpRecord> {
        vec![
            rec(1, 0, BlockKind::Genesis, 0, 0, 0.0, (1.0, 1.0)),
            rec(2, 1, BlockKind::Pow, 100, 1, 10.0, (2.0, 4.0)),
            rec(3, 1, BlockKind::Pow, 101, 1, 11.0, (2.0, 3.0)),
        ]
    }

    #[test]
    fn double_production_detected_once() {
        let mut r = forked();
        r.push(rec(4, 2, BlockKind::Pos, 7, 2, 100.0, (2.0, 5.0)));
        r.push(rec(5, 3, BlockKind::Pos, 7, 2, 101.0, (2.0, 4.0)));
        let ev = detect_double_production(&TreeDump::new(r.clone()));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].staker, AccountId(7));
        // the same block seen twice is not evidence
        let dup = vec![r[0].clone(), r[1].clone(), r[3].clone(), r[3].clone()];
        assert!(detect_double_production(&TreeDump::new(dup)).is_empty());
    }

    #[test]
    fn weight_timestamp_rule() {
        // heavy (8) at t=100, then light (6) at t=105
        let mut r = forked();
        r.push(rec(4, 2, BlockKind::Pos, 7, 2, 100.0, (2.0, 5.0)));
        r.push(rec(5, 3, BlockKind::Pos, 7, 5, 105.0, (2.0, 4.0)));
        let ev = detect_weight_timestamp_violation(&TreeDump::new(r));
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].details, Some((8.0, 100.0, 6.0, 105.0)));

        // light first, heavy later: switching up is legal
        let mut r = forked();
        r.push(rec(4, 3, BlockKind::Pos, 7, 2, 100.0, (2.0, 4.0)));
        r.push(rec(5, 2, BlockKind::Pos, 7, 2, 105.0, (2.0, 5.0)));
        assert!(detect_weight_timestamp_violation(&TreeDump::new(r)).is_empty());

        let mut r = forked();
        r.push(rec(4, 2, BlockKind::Pos, 7, 2, 100.0, (2.0, 5.0)));
        assert!(detect_weight_timestamp_violation(&TreeDump::new(r)).is_empty());
    }

    #[test]
    fn settlement_arithmetic() {
        let canon: Vec<DumpRecord> = (0..10)
            .map(|i| rec(i, 0, BlockKind::Pos, 7, i as u64, 0.0, (1.0, 1.0)))
            .collect();
        let side = vec![rec(99, 0, BlockKind::Pos, 7, 3, 0.0, (1.0, 1.0))];
        let net = dunkle_settlement(&canon, &side, 1.0, 2.0);
        assert_eq!(net[&AccountId(7)], 8.0);
        let net = dunkle_settlement(&canon, &[], 1.0, 2.0);
        assert_eq!(net[&AccountId(7)], 10.0);
        // PoW blocks are not settled
        let pow = vec![rec(50, 0, BlockKind::Pow, 8, 1, 0.0, (1.0, 1.0))];
        assert!(dunkle_settlement(&pow, &pow, 1.0, 2.0).is_empty());
    }

    #[test]
    fn settlement_conserves_value() {
        let canon: Vec<DumpRecord> = (0..7)
            .map(|i| rec(i, 0, BlockKind::Pos, (i % 3) as u64, i as u64, 0.0, (1.0, 1.0)))
            .collect();
        let side: Vec<DumpRecord> = (0..4)
            .map(|i| rec(100 + i, 0, BlockKind::Pos, (i % 2) as u64, i as u64, 0.0, (1.0, 1.0)))
            .collect();
        let (r, n) = (3.0, 2.5);
        let total: f64 = dunkle_settlement(&canon, &side, r, n).values().sum();
        assert_eq!(total, r * 7.0 - n * r * 4.0);
    }

    #[test]
    fn n_bound() {
        assert!((dunkle_n_bound(0.1013).unwrap() - 8.87).abs() < 0.01);
        assert_eq!(dunkle_n_bound(0.5).unwrap(), 1.0);
        assert!(dunkle_n_bound(1e-9).unwrap() > 1e8);
        assert!(dunkle_n_bound(0.0).is_err());
        assert!(dunkle_n_bound(1.0).is_err());
        // above the bound an honest staker loses money on average
        let a = 0.1013;
        assert!(dunkle_expected_revenue(a, 1.0, 8.0) > 0.0);
        assert!(dunkle_expected_revenue(a, 1.0, 10.0) < 0.0);
    }

    #[test]
    fn penalties_hit_ledger() {
        let mut ledger = Ledger::new(1, 1).unwrap();
        ledger.credit_active(AccountId(7), 50);
        let ev = Evidence {
            kind: EvidenceKind::DoubleProduction,
            staker: AccountId(7),
            blocks: (Digest::ZERO, Digest::ZERO),
            details: None,
        };
        assert_eq!(apply_penalties(&mut ledger, &[ev], 20, 0), 20);
        assert_eq!(ledger.voting_power(AccountId(7), 0), 30);
    }

    #[test]
    fn public_double_spend_policies() {
        let both = PublicDoubleSpendSetup::uniform(0.6, StakerPolicy::SupportBoth, None);
        assert!(public_double_spend_win_rate(&both, 200, 0) > 0.5);
        let honest = PublicDoubleSpendSetup::uniform(0.6, StakerPolicy::HonestOnly, Some(2.0));
        assert!(public_double_spend_win_rate(&honest, 200, 0) <= 0.05);
        // Without hash power the fork only grows through stakers who back it.
        let none = PublicDoubleSpendSetup::uniform(0.0, StakerPolicy::HonestOnly, None);
        assert_eq!(public_double_spend_win_rate(&none, 50, 0), 0.0);
    }

    #[test]
    fn dunkle_punishes_losing_side_supporters() {
        let setup = PublicDoubleSpendSetup::uniform(0.6, StakerPolicy::SupportBoth, Some(2.0));
        let out = run_public_double_spend(&setup, 3);
        let net: f64 = out.dunkle.unwrap().values().sum();
        let (win, lose) = if out.outcome.attacker_won {
            (out.attacker_blocks, out.main_blocks)
        } else {
            (out.main_blocks, out.attacker_blocks)
        };
        assert!(win > 0 && lose > 0);
        assert!(net < win as f64);
    }
}
