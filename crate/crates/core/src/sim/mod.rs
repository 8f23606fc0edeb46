//! Discrete-event simulation of a Unity network.

pub mod config;
mod engine;
pub mod report;

pub use config::{ConfigError, HashChange, Latency, Miner, SimConfig, SlashingMode, Staker};
pub use report::{
    difficulty_summary, fairness, orphan_proxy, proportionality, summarize_class, summarize_interarrivals, Class,
    ClassStats, DifficultySummary, FairnessRow, ReportSummary, SimReport,
};

use crate::chain::BlockTree;

/// Runs `cfg` to completion. The result is a pure function of the config.
pub fn run(cfg: &SimConfig) -> Result<SimReport, ConfigError> {
    let (tree, stats) = run_tree(cfg)?;
    Ok(SimReport::build(cfg, &tree, stats.produced, stats.future_rejections))
}

/// Runs `cfg` and returns the raw reporting tree.
pub fn run_tree(cfg: &SimConfig) -> Result<(BlockTree, RunCounters), ConfigError> {
    cfg.validate()?;
    let (tree, s) = engine::Engine::new(cfg).run();
    Ok((
        tree,
        RunCounters {
            produced: s.produced,
            deliveries: s.deliveries,
            future_rejections: s.future_rejections,
            invalid: s.invalid,
            events: s.events,
        },
    ))
}

/// Event-loop counters of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub produced: u64,
    pub deliveries: u64,
    pub future_rejections: u64,
    pub invalid: u64,
    pub events: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::AccountId;

    fn small(seed: u64, duration: f64) -> SimConfig {
        let mut c = SimConfig::baseline();
        c.duration = duration;
        c.rng_seed = seed;
        c.warmup_blocks = 50;
        c.d_genesis_w = 38.0 * 20.0;
        c.d_genesis_s = 380.0 * 20.0;
        c
    }

    #[test]
    fn same_config_same_report() {
        let c = small(3, 20_000.0);
        let mut a = Vec::new();
        let mut b = Vec::new();
        run(&c).unwrap().write_report_json(&mut a).unwrap();
        run(&c).unwrap().write_report_json(&mut b).unwrap();
        assert_eq!(a, b);
        let mut d = Vec::new();
        run(&small(4, 20_000.0)).unwrap().write_report_json(&mut d).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn zero_duration_is_rejected() {
        let c = small(0, 0.0);
        assert!(matches!(run(&c), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn block_rate_near_target() {
        let r = run(&small(1, 100_000.0)).unwrap();
        let expected = 100_000.0 / 10.0;
        let got = r.total_blocks as f64;
        assert!((got / expected - 1.0).abs() < 0.1, "{got}");
        assert_eq!(r.total_rewards(), r.total_blocks);
    }

    #[test]
    fn lone_producers_never_collide() {
        let mut c = SimConfig::with_defaults(1000.0, 200_000.0);
        c.stakers.push(Staker {
            account: AccountId(1),
            stake: 10,
        });
        c.miners.push(Miner {
            account: AccountId(1001),
            hash_power: 1.0,
        });
        c.warmup_blocks = 5;
        c.d_genesis_w = 2000.0;
        c.d_genesis_s = 20_000.0;
        let r = run(&c).unwrap();
        assert_eq!(r.orphan_count, 0);
        assert!(orphan_proxy(&r) < 0.01);
    }

    #[test]
    fn orphans_grow_with_latency() {
        let mut rates = Vec::new();
        for eps in [0.0, 1.0, 5.0] {
            let mut c = small(2, 30_000.0);
            c.latency = if eps == 0.0 { Latency::Fixed { seconds: 0.0 } } else { Latency::Fixed { seconds: eps } };
            let r = run(&c).unwrap();
            rates.push(r.orphan_count as f64 / r.stored_blocks as f64);
        }
        assert_eq!(rates[0], 0.0, "{rates:?}");
        assert!(rates[0] <= rates[1] && rates[1] <= rates[2], "{rates:?}");
        assert!(rates[2] > 0.0);
    }

    #[test]
    fn perfect_latency_tree_has_no_side_branches_from_delay() {
        let r = run(&small(5, 20_000.0)).unwrap();
        assert_eq!(r.future_rejections, 0);
        assert!(r.evidence.is_empty());
    }

    #[test]
    fn hash_drop_slows_then_recovers() {
        let mut c = small(6, 400_000.0);
        c.hash_changes.push(HashChange {
            at: 100_000.0,
            factor: 0.5,
        });
        let r = run(&c).unwrap();
        let pow: Vec<_> = r.difficulty_trace.iter().filter(|p| p.kind == crate::chain::BlockKind::Pow).collect();
        let before = pow.iter().rfind(|p| p.timestamp < 100_000.0).unwrap().difficulty;
        let end = pow.last().unwrap().difficulty;
        assert!(end / before < 0.75 && end / before > 0.3, "{before} -> {end}");
    }
}
