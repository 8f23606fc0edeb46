//! PoS-only long-range rewrite.
//!
//! An honest network runs to `φ`, the end of the configured duration. The
//! attacker then takes the keys of stakers that were active at a canonical
//! block `depth` heights below the tip and forges a PoS-only chain from
//! there, with real seed-chain tickets, up to timestamp `φ`. Its product is
//! compared with the honest product at matched timestamps.

use serde::Serialize;

use super::race::{run_private_double_spend, AttackSetup, RaceConfig};
use super::{invalid, AttackError, AttackOutcome, TrajectoryPoint};
use crate::chain::{Block, BlockTree, Provenance};
use crate::crypto::{AccountId, Oracle};
use crate::forging::{forge_pos_block, pos_ticket, StakerContext};
use crate::ledger::Ledger;
use crate::sim::{self, SimConfig};

/// `Ω > H_w d̄_w / H_s`: extra staking difficulty per unit the attacker
/// needs to overcome `H_w` PoW blocks of mean difficulty `d̄_w` with `H_s`
/// PoS blocks.
pub fn lra_omega_bound(h_w: f64, h_s: f64, mean_d_w: f64) -> Result<f64, AttackError> {
    if !(h_s > 0.0) {
        return Err(invalid("H_s", format!("must be positive, got {h_s}")));
    }
    Ok(h_w * mean_d_w / h_s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LraConfig {
    /// The honest network the attacker rewrites.
    pub base: SimConfig,
    /// Heights below the honest tip at which the fork starts.
    pub depth: u64,
    /// Fraction of total stake the attacker controls, in `[0, 1]`.
    pub attacker_share: f64,
    /// Credit each attacker block's reward and lock it as new stake.
    pub compound_rewards: bool,
    /// Race length used when `depth` is 0.
    pub race_horizon: f64,
}

impl LraConfig {
    pub fn new(base: SimConfig, depth: u64, attacker_share: f64) -> Self {
        LraConfig {
            base,
            depth,
            attacker_share,
            compound_rewards: false,
            race_horizon: 10_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LraOutcome {
    pub outcome: AttackOutcome,
    pub attackers: Vec<AccountId>,
    pub attacker_stake: u64,
    pub fork_height: u64,
    pub fork_time: f64,
    pub attacker_blocks: u64,
    /// Largest attacker/honest product ratio at any matched instant.
    pub max_ratio: f64,
    /// Ratio at the end of the comparison window.
    pub final_ratio: f64,
}

/// Largest-first stakers whose stake fits within `share` of the total.
fn pick_attackers(cfg: &SimConfig, share: f64) -> (Vec<AccountId>, u64) {
    let budget = share * cfg.total_stake() as f64;
    let mut stakers: Vec<_> = cfg.stakers.iter().collect();
    stakers.sort_by(|a, b| b.stake.cmp(&a.stake).then(a.account.cmp(&b.account)));
    let mut chosen = Vec::new();
    let mut sum = 0u64;
    for s in stakers {
        if (sum + s.stake) as f64 <= budget * (1.0 + 1e-12) {
            sum += s.stake;
            chosen.push(s.account);
        }
    }
    chosen.sort();
    (chosen, sum)
}

/// `(timestamp, product)` pairs turned into a step function with a running
/// maximum, sorted by time.
fn step_fn(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::NEG_INFINITY;
    for p in &mut pts {
        best = best.max(p.1);
        p.1 = best;
    }
    pts
}

fn value_at(f: &[(f64, f64)], t: f64) -> f64 {
    let i = f.partition_point(|p| p.0 <= t);
    if i == 0 { f64::NAN } else { f[i - 1].1 }
}

fn ratio_summary(traj: &[TrajectoryPoint]) -> (f64, f64) {
    let max = traj.iter().map(|p| p.attacker / p.honest).fold(f64::NEG_INFINITY, f64::max);
    let last = traj.last().map(|p| p.attacker / p.honest).unwrap_or(f64::NAN);
    (max, last)
}

pub fn run_long_range_attack(cfg: &LraConfig) -> Result<LraOutcome, AttackError> {
    if !(0.0..=1.0).contains(&cfg.attacker_share) {
        return Err(invalid("attacker_share", format!("must lie in [0, 1], got {}", cfg.attacker_share)));
    }
    let base = &cfg.base;
    let (attackers, attacker_stake) = pick_attackers(base, cfg.attacker_share);
    let (honest, _) = sim::run_tree(base)?;
    let chain = honest.canonical_chain();
    let tip = chain.last().expect("genesis at least");
    let fork_height = tip.height.saturating_sub(cfg.depth);
    let fork = &chain[fork_height as usize];

    if cfg.depth == 0 {
        return Ok(depth_zero(cfg, &honest, fork, attackers, attacker_stake));
    }

    let oracle = Oracle::new(base.rng_seed);
    let mut ledger = Ledger::new(base.maturation, base.withdrawal).expect("validated delays");
    for s in &base.stakers {
        ledger.credit_active(s.account, s.stake);
    }
    let stakers: Vec<StakerContext> = attackers
        .iter()
        .map(|a| StakerContext::new(oracle.keypair(*a)))
        .collect();

    let phi = base.duration;
    let mut tree = honest.clone();
    tree.set_enforce_future(false);
    let mut at = fork.id;
    let mut attack_pts = Vec::new();
    loop {
        let mut best = None;
        for s in &stakers {
            if let Some(t) = pos_ticket(&tree, &at, s, &oracle, &ledger).expect("attack tip stored") {
                if best.is_none_or(|b: crate::forging::PosTicket| t.eligible_at < b.eligible_at) {
                    best = Some(t);
                }
            }
        }
        let Some(ticket) = best.filter(|t| t.eligible_at <= phi) else { break };
        let parent = tree.block(&at).expect("stored").clone();
        let block = forge_pos_block(&parent, &ticket, ticket.eligible_at, Vec::new(), Provenance::Adversarial)
            .expect("adversarial forging never waits");
        let (id, height) = (block.id, block.height);
        tree.import(block, ticket.eligible_at).expect("attack block is well-formed");
        at = id;
        attack_pts.push((ticket.eligible_at, tree.entry(&id).expect("stored").weight.product()));
        if cfg.compound_rewards {
            ledger.credit(ticket.account, base.block_reward);
            ledger
                .lock(ticket.account, base.block_reward, height)
                .expect("credited amount is liquid");
        }
    }

    let prefix: Vec<(f64, f64)> = chain[..=fork_height as usize]
        .iter()
        .map(|b| (b.timestamp, honest.entry(&b.id).expect("stored").weight.product()))
        .collect();
    let honest_fn = step_fn(
        chain
            .iter()
            .map(|b| (b.timestamp, honest.entry(&b.id).expect("stored").weight.product()))
            .collect(),
    );
    let attacker_blocks = attack_pts.len() as u64;
    let attack_fn = step_fn(prefix.into_iter().chain(attack_pts).collect());

    let mut times: Vec<f64> = honest_fn
        .iter()
        .chain(&attack_fn)
        .map(|p| p.0)
        .filter(|&t| t >= fork.timestamp && t <= phi)
        .collect();
    times.push(phi);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let trajectory: Vec<TrajectoryPoint> = times
        .into_iter()
        .map(|t| TrajectoryPoint {
            time: t - fork.timestamp,
            attacker: value_at(&attack_fn, t),
            honest: value_at(&honest_fn, t),
        })
        .collect();
    let crossing = trajectory.iter().find(|p| p.attacker > p.honest).map(|p| p.time);
    let (max_ratio, final_ratio) = ratio_summary(&trajectory);
    let last = *trajectory.last().expect("phi is always sampled");
    Ok(LraOutcome {
        outcome: AttackOutcome {
            attacker_won: crossing.is_some(),
            crossing_time: crossing,
            final_attacker: last.attacker,
            final_honest: last.honest,
            trajectory,
        },
        attackers,
        attacker_stake,
        fork_height,
        fork_time: fork.timestamp,
        attacker_blocks,
        max_ratio,
        final_ratio,
    })
}

/// With no history to rewrite the attack is a stake-only private race from
/// the tip.
fn depth_zero(
    cfg: &LraConfig,
    honest: &BlockTree,
    fork: &Block,
    attackers: Vec<AccountId>,
    attacker_stake: u64,
) -> LraOutcome {
    let base = &cfg.base;
    let w = honest.entry(&fork.id).expect("stored").weight;
    let setup = AttackSetup {
        a: 0.0,
        b: attacker_stake as f64,
        c: base.total_hash(),
        d: (base.total_stake() - attacker_stake) as f64,
        td_wc: w.td_w,
        td_sc: w.td_s,
        horizon: cfg.race_horizon,
    };
    let race = RaceConfig {
        record_trajectory: true,
        ..RaceConfig::frozen_equilibrium(&setup, base.t)
    };
    let outcome = run_private_double_spend(&setup, &race, base.rng_seed);
    let (max_ratio, final_ratio) = ratio_summary(&outcome.trajectory);
    let attacker_blocks = outcome
        .trajectory
        .windows(2)
        .filter(|w| w[1].attacker > w[0].attacker)
        .count() as u64;
    LraOutcome {
        outcome,
        attackers,
        attacker_stake,
        fork_height: fork.height,
        fork_time: fork.timestamp,
        attacker_blocks,
        max_ratio,
        final_ratio,
    }
}
