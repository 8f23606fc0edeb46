//! Invariant suites at reduced scale.

use std::path::Path;

use clap::ValueEnum;
use rayon::prelude::*;
use unity_core::attacks::{run_split_stake_nas, SplitStakeConfig};
use unity_core::sim::{
    self, difficulty_summary, proportionality, summarize_interarrivals, Class, SimConfig, SimReport, SlashingMode,
};

use crate::error::CliError;
use crate::simulate::load_config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    PoissonMerge,
    Fairness,
    DifficultyConvergence,
    SplitStake,
    SlashingNegatives,
    All,
}

impl Suite {
    const EACH: [Suite; 5] = [
        Suite::PoissonMerge,
        Suite::Fairness,
        Suite::DifficultyConvergence,
        Suite::SplitStake,
        Suite::SlashingNegatives,
    ];

    fn label(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

/// Default scale: the baseline cut to ten days.
fn default_config() -> SimConfig {
    let mut c = SimConfig::baseline();
    c.duration = 10.0 * 86_400.0;
    c
}

struct Assertion {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn assertion(name: &'static str, pass: bool, detail: String) -> Assertion {
    Assertion { name, pass, detail }
}

struct Ctx {
    cfg: SimConfig,
    report: Option<SimReport>,
}

impl Ctx {
    fn report(&mut self) -> Result<&SimReport, CliError> {
        if self.report.is_none() {
            self.report = Some(sim::run(&self.cfg).map_err(CliError::config)?);
        }
        Ok(self.report.as_ref().expect("just filled"))
    }
}

fn poisson_merge(ctx: &mut Ctx) -> Result<Vec<Assertion>, CliError> {
    let t = ctx.cfg.t;
    let r = ctx.report()?;
    let imbalance = (r.pos_blocks as f64 - r.pow_blocks as f64).abs() / r.total_blocks.max(1) as f64;
    let s = summarize_interarrivals(r).map_err(|e| CliError::Check(format!("poisson-merge: {e}")))?;
    let mut out = vec![
        assertion(
            "kind balance",
            imbalance < 0.01,
            format!("PoS {} PoW {}, |diff|/total {imbalance:.4}", r.pos_blocks, r.pow_blocks),
        ),
        assertion(
            "combined mean",
            (s[&Class::All].mean / t - 1.0).abs() < 0.05,
            format!("{:.3} s against target {t} s", s[&Class::All].mean),
        ),
    ];
    for c in [Class::All, Class::Pos, Class::Pow] {
        let st = &s[&c];
        out.push(assertion(
            "exponential fit",
            st.ks_statistic < st.ks_critical,
            format!("{} KS {:.5} < {:.5}", c.name(), st.ks_statistic, st.ks_critical),
        ));
    }
    Ok(out)
}

fn fairness(ctx: &mut Ctx) -> Result<Vec<Assertion>, CliError> {
    let r = ctx.report()?;
    Ok([Class::Pos, Class::Pow]
        .into_iter()
        .map(|c| {
            let p = proportionality(r, c);
            assertion(
                "proportionality",
                p.is_some_and(|p| p < 0.05),
                match p {
                    Some(p) => format!("{} score {p:.4} < 0.05", c.name()),
                    None => format!("{} earned no rewards", c.name()),
                },
            )
        })
        .collect())
}

fn difficulty_convergence(ctx: &mut Ctx) -> Result<Vec<Assertion>, CliError> {
    let r = ctx.report()?;
    let Some(d) = difficulty_summary(r) else {
        return Ok(vec![assertion("post-warm-up trace", false, "no blocks after warm-up".into())]);
    };
    Ok(vec![
        assertion(
            "difficulty ratio",
            (8.5..=11.5).contains(&d.ratio_time_avg),
            format!("mean d_s/d_w {:.3} in [8.5, 11.5]", d.ratio_time_avg),
        ),
        assertion(
            "mining difficulty band",
            d.pow_norm_min >= 0.7 && d.pow_norm_max <= 1.4,
            format!("d_w/(r*2t) in [{:.3}, {:.3}] within [0.7, 1.4]", d.pow_norm_min, d.pow_norm_max),
        ),
    ])
}

fn split_stake(ctx: &mut Ctx) -> Result<Vec<Assertion>, CliError> {
    let cfg = SplitStakeConfig {
        seed: ctx.cfg.rng_seed,
        ..SplitStakeConfig::even(100, 10, 20_000).expect("valid split")
    };
    let r = run_split_stake_nas(&cfg).map_err(CliError::config)?;
    Ok(vec![
        assertion(
            "delay distributions match",
            r.indistinguishable(),
            format!("two-sample KS {:.5} < {:.5}", r.ks_two_sample, r.ks_two_sample_critical),
        ),
        assertion("split leaves no evidence", r.split_evidence == 0, format!("{} items", r.split_evidence)),
        assertion(
            "single account is caught",
            r.single_evidence > 0,
            format!("{} items", r.single_evidence),
        ),
    ])
}

fn slashing_negatives(ctx: &mut Ctx) -> Result<Vec<Assertion>, CliError> {
    let counts = (0..5u64)
        .into_par_iter()
        .map(|i| {
            let mut c = ctx.cfg.clone();
            c.rng_seed = c.rng_seed.wrapping_add(i);
            c.slashing = SlashingMode::Evidence;
            sim::run(&c).map(|r| r.evidence.len())
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::config)?;
    Ok(vec![assertion(
        "honest runs raise no evidence",
        counts.iter().all(|&n| n == 0),
        format!("evidence per seed {counts:?}"),
    )])
}

pub fn run(suite: Suite, config: Option<&Path>, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => default_config(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    let mut ctx = Ctx { cfg, report: None };
    let suites: Vec<Suite> = if suite == Suite::All { Suite::EACH.to_vec() } else { vec![suite] };
    let mut failed = Vec::new();
    for s in suites {
        let results = match s {
            Suite::PoissonMerge => poisson_merge(&mut ctx)?,
            Suite::Fairness => fairness(&mut ctx)?,
            Suite::DifficultyConvergence => difficulty_convergence(&mut ctx)?,
            Suite::SplitStake => split_stake(&mut ctx)?,
            Suite::SlashingNegatives => slashing_negatives(&mut ctx)?,
            Suite::All => unreachable!("expanded above"),
        };
        for a in results {
            println!("{} {}: {}: {}", if a.pass { "ok  " } else { "FAIL" }, s.label(), a.name, a.detail);
            if !a.pass {
                failed.push(format!("{}: {}", s.label(), a.name));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join("; ")))
    }
}
