use std::collections::BTreeMap;
use std::path::Path;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use unity_core::attacks::{
    private_double_spend_trials, run_future_mining_game, run_long_range_attack, run_selfish_mining,
    run_split_stake_nas, write_trajectories_csv, AttackOutcome, AttackSetup, FutureGameConfig, LraConfig,
    RaceConfig, SelfishConfig, SplitStakeConfig,
};
use unity_core::crypto::AccountId;
use unity_core::sim::SimConfig;
use unity_core::slashing::{run_public_double_spend, PublicDoubleSpendSetup, StakerPolicy};

use crate::error::CliError;
use crate::output::{read_to_string, OutDir};
use crate::params::Params;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackName {
    DoubleSpend,
    LongRange,
    Selfish,
    SplitStake,
    FutureMining,
    PublicDoubleSpend,
}

impl AttackName {
    fn label(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

const ARTIFACTS: &[&str] = &["attack_report.json", "trajectories.csv"];

struct Run {
    report: Value,
    trajectories: Vec<AttackOutcome>,
    summary: String,
}

pub fn run(name: AttackName, config: Option<&Path>, trials: Option<u64>, seed: u64, out: &Path, force: bool) -> Result<(), CliError> {
    let mut params = match config {
        Some(p) => Params::parse(&read_to_string(p)?)?,
        None => Params::empty(),
    };
    let out = OutDir::prepare(out, force, ARTIFACTS)?;
    let run = match name {
        AttackName::DoubleSpend => double_spend(&mut params, trials.unwrap_or(200), seed)?,
        AttackName::LongRange => long_range(&mut params, trials.unwrap_or(10), seed)?,
        AttackName::Selfish => selfish(&mut params, trials.unwrap_or(100), seed)?,
        AttackName::SplitStake => split_stake(&mut params, trials.unwrap_or(100_000), seed)?,
        AttackName::FutureMining => future_mining(&mut params, seed)?,
        AttackName::PublicDoubleSpend => public_double_spend(&mut params, trials.unwrap_or(200), seed)?,
    };
    params.finish()?;
    let report = json!({ "attack": name.label(), "seed": seed, "result": run.report });
    out.write_json("attack_report.json", &report)?;
    out.write("trajectories.csv", |w| write_trajectories_csv(w, &run.trajectories))?;
    println!("{}: {}", name.label(), run.summary);
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn double_spend(p: &mut Params, trials: u64, seed: u64) -> Result<Run, CliError> {
    let setup = AttackSetup {
        a: p.get("a", 60.0)?,
        b: p.get("b", 60.0)?,
        c: p.get("c", 40.0)?,
        d: p.get("d", 40.0)?,
        td_wc: p.get("td_wc", 1000.0)?,
        td_sc: p.get("td_sc", 1000.0)?,
        horizon: p.get("horizon", 2000.0)?,
    };
    let t: f64 = p.get("t", 10.0)?;
    if t.is_nan() || t <= 0.0 || [setup.a, setup.b, setup.c, setup.d].iter().any(|x| *x < 0.0) {
        return Err(CliError::Config("powers must be non-negative and t positive".into()));
    }
    let race = RaceConfig {
        record_trajectory: true,
        ..RaceConfig::frozen_equilibrium(&setup, t)
    };
    let s = private_double_spend_trials(&setup, &race, trials, seed);
    let report = json!({
        "setup": setup,
        "lhs": s.lhs,
        "feasible": s.feasible,
        "trials": s.trials,
        "wins": s.wins,
        "win_rate": s.win_rate,
    });
    Ok(Run {
        summary: format!("lhs {:.1} (feasible: {}), win rate {:.3}", s.lhs, s.feasible, s.win_rate),
        report,
        trajectories: s.outcomes,
    })
}

/// Default honest network: a short baseline started at equilibrium
/// difficulty so the fork point sits in steady state.
fn default_lra_base() -> SimConfig {
    let mut base = SimConfig::baseline();
    base.duration = 20_000.0;
    base.d_genesis_w = base.total_hash() * 2.0 * base.t;
    base.d_genesis_s = base.total_stake() as f64 * 2.0 * base.t;
    base
}

fn long_range(p: &mut Params, trials: u64, seed: u64) -> Result<Run, CliError> {
    let depth = p.get("depth", 400u64)?;
    let share = p.get("attacker_share", 1.0)?;
    let compound = p.get("compound_rewards", false)?;
    let race_horizon = p.get("race_horizon", 10_000.0)?;
    let rest = p.take_rest();
    let base = if rest.trim().is_empty() {
        default_lra_base()
    } else {
        SimConfig::parse(&rest).map_err(CliError::config)?
    };
    let cfg = |i: u64| {
        let mut b = base.clone();
        b.rng_seed = seed.wrapping_add(i);
        LraConfig {
            compound_rewards: compound,
            race_horizon,
            ..LraConfig::new(b, depth, share)
        }
    };
    let runs = (0..trials)
        .into_par_iter()
        .map(|i| run_long_range_attack(&cfg(i)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::config)?;
    let wins = runs.iter().filter(|r| r.outcome.attacker_won).count();
    let max_ratio = runs.iter().map(|r| r.max_ratio).fold(f64::NEG_INFINITY, f64::max);
    let per_trial: Vec<Value> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "seed": seed.wrapping_add(i as u64),
                "attacker_won": r.outcome.attacker_won,
                "attackers": r.attackers,
                "attacker_stake": r.attacker_stake,
                "fork_height": r.fork_height,
                "fork_time": r.fork_time,
                "attacker_blocks": r.attacker_blocks,
                "max_ratio": r.max_ratio,
                "final_ratio": r.final_ratio,
            })
        })
        .collect();
    let report = json!({
        "depth": depth,
        "attacker_share": share,
        "compound_rewards": compound,
        "trials": trials,
        "wins": wins,
        "win_rate": if trials == 0 { 0.0 } else { wins as f64 / trials as f64 },
        "max_ratio": max_ratio,
        "runs": per_trial,
    });
    Ok(Run {
        summary: format!("{wins}/{trials} wins, largest attacker/honest ratio {max_ratio:.6}"),
        report,
        trajectories: runs.into_iter().map(|r| r.outcome).collect(),
    })
}

fn selfish(p: &mut Params, trials: u64, seed: u64) -> Result<Run, CliError> {
    let cfg = SelfishConfig {
        attacker_share: p.get("attacker_share", 0.33)?,
        t: p.get("t", 10.0)?,
        horizon: p.get("horizon", 200_000.0)?,
        trials,
        base_seed: seed,
    };
    let o = run_selfish_mining(&cfg).map_err(CliError::config)?;
    Ok(Run {
        summary: format!(
            "revenue share {:.4} with stakers, {:.4} pure PoW",
            o.unity_revenue_share, o.control_revenue_share
        ),
        report: to_value(&o),
        trajectories: Vec::new(),
    })
}

fn split_stake(p: &mut Params, rounds: u64, seed: u64) -> Result<Run, CliError> {
    let stake = p.get("stake", 100u64)?;
    let k = p.get("splits", 10u64)?;
    let cfg = SplitStakeConfig {
        d_s: p.get("d_s", 20.0)?,
        seed,
        ..SplitStakeConfig::even(stake, k, rounds).map_err(CliError::config)?
    };
    let r = run_split_stake_nas(&cfg).map_err(CliError::config)?;
    let mut report = to_value(&r);
    report["indistinguishable"] = json!(r.indistinguishable());
    Ok(Run {
        summary: format!(
            "KS {:.5} vs critical {:.5}, split evidence {}",
            r.ks_two_sample, r.ks_two_sample_critical, r.split_evidence
        ),
        report,
        trajectories: Vec::new(),
    })
}

fn future_mining(p: &mut Params, seed: u64) -> Result<Run, CliError> {
    let d = FutureGameConfig::default();
    let cfg = FutureGameConfig {
        seed,
        t_future: p.get("t_future", d.t_future)?,
        d_w: p.get("d_w", d.d_w)?,
        d_s: p.get("d_s", d.d_s)?,
        alice_stake: p.get("alice_stake", d.alice_stake)?,
        bob_stake: p.get("bob_stake", d.bob_stake)?,
        bob_present: p.get("bob_present", d.bob_present)?,
    };
    let t = run_future_mining_game(&cfg).map_err(CliError::config)?;
    let mut report = to_value(&t);
    report["matches_expected_accounting"] = json!(t.matches_expected_accounting());
    Ok(Run {
        summary: format!(
            "seed {} reproduces the scripted accounting: {}",
            t.seed,
            t.matches_expected_accounting()
        ),
        report,
        trajectories: Vec::new(),
    })
}

fn parse_policy(s: &str) -> Result<StakerPolicy, CliError> {
    match s {
        "support-both" => Ok(StakerPolicy::SupportBoth),
        "honest-only" => Ok(StakerPolicy::HonestOnly),
        "follow-hash-power" => Ok(StakerPolicy::FollowHashPower),
        other => Err(CliError::Config(format!(
            "field `policy`: `{other}`; expected support-both, honest-only or follow-hash-power"
        ))),
    }
}

fn public_double_spend(p: &mut Params, trials: u64, seed: u64) -> Result<Run, CliError> {
    let share: f64 = p.get("attacker_share", 0.3)?;
    let policy = parse_policy(&p.get("policy", "support-both".to_string())?)?;
    let dunkle_n: Option<f64> = p.get_opt("dunkle_n")?;
    let d = PublicDoubleSpendSetup::uniform(share, policy, dunkle_n);
    let setup = PublicDoubleSpendSetup {
        d_w: p.get("d_w", d.d_w)?,
        d_s: p.get("d_s", d.d_s)?,
        fork_td_w: p.get("fork_td_w", d.fork_td_w)?,
        fork_td_s: p.get("fork_td_s", d.fork_td_s)?,
        horizon: p.get("horizon", d.horizon)?,
        block_reward: p.get("block_reward", d.block_reward)?,
        ..d
    };
    if !(0.0..=1.0).contains(&share) {
        return Err(CliError::Config(format!("field `attacker_share`: must lie in [0, 1], got {share}")));
    }
    let runs: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|i| run_public_double_spend(&setup, seed.wrapping_add(i)))
        .collect();
    let wins = runs.iter().filter(|r| r.outcome.attacker_won).count();
    let win_rate = if trials == 0 { 0.0 } else { wins as f64 / trials as f64 };
    let mut report = json!({
        "setup": setup,
        "trials": trials,
        "wins": wins,
        "win_rate": win_rate,
    });
    if let Some(n) = dunkle_n {
        let mut total: BTreeMap<AccountId, f64> = BTreeMap::new();
        for r in &runs {
            for (a, v) in r.dunkle.iter().flatten() {
                *total.entry(*a).or_default() += v;
            }
        }
        let mean: BTreeMap<String, f64> = total
            .into_iter()
            .map(|(a, v)| (a.to_string(), v / trials.max(1) as f64))
            .collect();
        report["dunkle_n"] = json!(n);
        report["dunkle_mean_net_revenue"] = json!(mean);
    }
    Ok(Run {
        summary: format!("win rate {win_rate:.3}"),
        report,
        trajectories: runs.into_iter().map(|r| r.outcome).collect(),
    })
}
