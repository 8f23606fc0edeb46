//! Metrics derived from a finished run, and the artifact writers.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::chain::{Block, BlockKind, BlockTree};
use crate::crypto::AccountId;
use crate::dump::TreeDump;
use crate::slashing::{self, Evidence};
use crate::stats::{self, FitResult, StatsError};

use super::config::{Latency, SimConfig, SlashingMode};

/// Fewest samples per class accepted by [`summarize_interarrivals`].
pub const MIN_INTERARRIVAL_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    All,
    #[serde(rename = "PoS")]
    Pos,
    #[serde(rename = "PoW")]
    Pow,
}

impl Class {
    pub fn name(self) -> &'static str {
        match self {
            Class::All => "all",
            Class::Pos => "PoS",
            Class::Pow => "PoW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifficultyPoint {
    /// 1-based index among canonical blocks of the same kind.
    pub index: u64,
    pub kind: BlockKind,
    pub difficulty: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TipSummary {
    pub height: u64,
    pub td_w: f64,
    pub td_s: f64,
}

/// Everything measured in one run. `report.json` holds [`SimReport::summary`];
/// the sample lists go to CSV files.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub config: SimConfig,
    pub total_blocks: u64,
    pub pos_blocks: u64,
    pub pow_blocks: u64,
    /// Blocks stored in the reporting tree, genesis excluded.
    pub stored_blocks: u64,
    pub produced_blocks: u64,
    /// Stored blocks not on the canonical chain.
    pub orphan_count: u64,
    /// Time after which steady-state statistics are taken.
    pub warmup_end: f64,
    pub interarrival_all: Vec<f64>,
    pub interarrival_pos: Vec<f64>,
    pub interarrival_pow: Vec<f64>,
    pub pos_rewards: BTreeMap<AccountId, u64>,
    pub pow_rewards: BTreeMap<AccountId, u64>,
    pub difficulty_trace: Vec<DifficultyPoint>,
    /// Canonical post-warm-up blocks per integer second, starting at
    /// `floor(warmup_end)`.
    pub blocks_per_second: Vec<u64>,
    pub canonical_tip: TipSummary,
    pub future_rejections: u64,
    pub evidence: Vec<Evidence>,
    pub dunkle: Option<BTreeMap<AccountId, f64>>,
    pub dump: TreeDump,
}

impl SimReport {
    pub(crate) fn build(cfg: &SimConfig, tree: &BlockTree, produced: u64, future_rejections: u64) -> Self {
        let chain = tree.canonical_chain();
        let blocks = &chain[1..];
        let count = |k| blocks.iter().filter(|b| b.kind == k).count() as u64;

        let warmup_end = warmup_end(blocks, cfg.warmup_blocks);
        let mut times: Vec<f64> = blocks.iter().map(|b| b.timestamp).collect();
        times.sort_by(f64::total_cmp);
        let kind_gaps = |k| {
            let ts: Vec<f64> = blocks.iter().filter(|b| b.kind == k).map(|b| b.timestamp).collect();
            gaps_after(&ts, warmup_end)
        };

        let mut pos_rewards = BTreeMap::new();
        let mut pow_rewards = BTreeMap::new();
        for b in blocks {
            let map = if b.kind == BlockKind::Pos { &mut pos_rewards } else { &mut pow_rewards };
            *map.entry(b.producer).or_insert(0) += cfg.block_reward;
        }

        let mut idx = [0u64; 2];
        let difficulty_trace = blocks
            .iter()
            .map(|b| {
                let i = &mut idx[(b.kind == BlockKind::Pos) as usize];
                *i += 1;
                DifficultyPoint {
                    index: *i,
                    kind: b.kind,
                    difficulty: b.difficulty,
                    timestamp: b.timestamp,
                }
            })
            .collect();

        let start = warmup_end.floor();
        let blocks_per_second = stats::integer_histogram(times.iter().filter(|&&t| t >= warmup_end).map(|t| t - start));

        let tip = tree.entry(&tree.canonical_tip()).expect("tip stored");
        let dump = tree.dump();
        let stored = (tree.len() - 1) as u64;
        let (evidence, dunkle) = match cfg.slashing {
            SlashingMode::Off => (Vec::new(), None),
            SlashingMode::Evidence => (slashing::detect_all(&dump), None),
            SlashingMode::Dunkle { n } => (
                slashing::detect_all(&dump),
                Some(slashing::dunkle_settlement_dump(&dump, cfg.block_reward as f64, n)),
            ),
        };

        SimReport {
            config: cfg.clone(),
            total_blocks: blocks.len() as u64,
            pos_blocks: count(BlockKind::Pos),
            pow_blocks: count(BlockKind::Pow),
            stored_blocks: stored,
            produced_blocks: produced,
            orphan_count: stored - blocks.len() as u64,
            warmup_end,
            interarrival_all: gaps_after(&times, warmup_end),
            interarrival_pos: kind_gaps(BlockKind::Pos),
            interarrival_pow: kind_gaps(BlockKind::Pow),
            pos_rewards,
            pow_rewards,
            difficulty_trace,
            blocks_per_second,
            canonical_tip: TipSummary {
                height: tip.block.height,
                td_w: tip.weight.td_w,
                td_s: tip.weight.td_s,
            },
            future_rejections,
            evidence,
            dunkle,
            dump,
        }
    }

    pub fn interarrivals(&self, class: Class) -> &[f64] {
        match class {
            Class::All => &self.interarrival_all,
            Class::Pos => &self.interarrival_pos,
            Class::Pow => &self.interarrival_pow,
        }
    }

    pub fn total_rewards(&self) -> u64 {
        self.pos_rewards.values().chain(self.pow_rewards.values()).sum()
    }

    pub fn summary(&self) -> ReportSummary {
        let classes = [Class::All, Class::Pos, Class::Pow];
        ReportSummary {
            config: self.config.clone(),
            total_blocks: self.total_blocks,
            pos_blocks: self.pos_blocks,
            pow_blocks: self.pow_blocks,
            kind_imbalance: kind_imbalance(self),
            stored_blocks: self.stored_blocks,
            produced_blocks: self.produced_blocks,
            orphan_count: self.orphan_count,
            orphan_proxy: orphan_proxy(self),
            warmup_end: self.warmup_end,
            interarrivals: classes
                .into_iter()
                .map(|c| (c.name().to_string(), class_stats(self, c)))
                .collect(),
            fairness: fairness(self),
            proportionality: [Class::Pos, Class::Pow]
                .into_iter()
                .map(|c| (c.name().to_string(), proportionality(self, c)))
                .collect(),
            difficulty: difficulty_summary(self),
            canonical_tip: self.canonical_tip,
            total_rewards: self.total_rewards(),
            future_rejections: self.future_rejections,
            evidence_count: self.evidence.len(),
            dunkle: self.dunkle.clone(),
        }
    }

    pub fn write_report_json<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.summary())?;
        w.write_all(b"\n")
    }

    /// `class,gap_seconds`, post-warm-up gaps only.
    pub fn write_interarrivals_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "class,gap_seconds")?;
        for c in [Class::All, Class::Pos, Class::Pow] {
            for g in self.interarrivals(c) {
                writeln!(w, "{},{}", c.name(), g)?;
            }
        }
        Ok(())
    }

    /// `account,class,power,reward`.
    pub fn write_rewards_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "account,class,power,reward")?;
        for row in fairness(self) {
            writeln!(w, "{},{},{},{}", row.account, row.class.name(), row.power, row.reward)?;
        }
        Ok(())
    }

    /// `block_height_of_kind,kind,difficulty`.
    pub fn write_difficulty_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "block_height_of_kind,kind,difficulty")?;
        for p in &self.difficulty_trace {
            writeln!(w, "{},{},{}", p.index, p.kind, p.difficulty)?;
        }
        Ok(())
    }

    /// `second,blocks`, the per-second histogram behind the orphan proxy.
    pub fn write_blocks_per_second_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "second,blocks")?;
        let start = self.warmup_end.floor() as u64;
        for (i, c) in self.blocks_per_second.iter().enumerate() {
            writeln!(w, "{},{}", start + i as u64, c)?;
        }
        Ok(())
    }
}

/// Later of the `n`-th PoW and `n`-th PoS canonical timestamps (0 when `n` is
/// 0, infinite when a kind never reaches `n`).
fn warmup_end(blocks: &[std::sync::Arc<Block>], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nth = |k| {
        blocks
            .iter()
            .filter(|b| b.kind == k)
            .nth(n as usize - 1)
            .map_or(f64::INFINITY, |b| b.timestamp)
    };
    nth(BlockKind::Pow).max(nth(BlockKind::Pos))
}

/// Consecutive differences of ascending `ts`, keeping gaps that start at or
/// after `from`.
fn gaps_after(ts: &[f64], from: f64) -> Vec<f64> {
    ts.windows(2).filter(|w| w[0] >= from).map(|w| w[1] - w[0]).collect()
}

fn kind_imbalance(r: &SimReport) -> f64 {
    if r.total_blocks == 0 {
        return 0.0;
    }
    (r.pos_blocks as f64 - r.pow_blocks as f64).abs() / r.total_blocks as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub rate: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
}

impl ClassStats {
    /// `|std - mean| / mean`.
    pub fn dispersion_gap(&self) -> f64 {
        (self.std - self.mean).abs() / self.mean
    }
}

/// Mean, standard deviation, fitted rate and KS distance of one class.
pub fn summarize_class(samples: &[f64]) -> Result<ClassStats, StatsError> {
    if samples.len() < MIN_INTERARRIVAL_SAMPLES {
        return Err(StatsError::TooFewSamples {
            needed: MIN_INTERARRIVAL_SAMPLES,
            got: samples.len(),
        });
    }
    let fit: FitResult = stats::fit_exponential(samples)?;
    Ok(ClassStats {
        count: samples.len(),
        mean: stats::mean(samples),
        std: stats::std_dev(samples),
        rate: fit.rate,
        ks_statistic: fit.ks_statistic,
        ks_critical: fit.ks_critical(),
    })
}

fn class_stats(r: &SimReport, c: Class) -> Option<ClassStats> {
    summarize_class(r.interarrivals(c)).ok()
}

/// Per-class statistics for all, PoS and PoW gaps.
pub fn summarize_interarrivals(r: &SimReport) -> Result<BTreeMap<Class, ClassStats>, StatsError> {
    [Class::All, Class::Pos, Class::Pow]
        .into_iter()
        .map(|c| summarize_class(r.interarrivals(c)).map(|s| (c, s)))
        .collect()
}

/// Under perfect latency: the share of post-warm-up canonical blocks that
/// land in an integer second already holding a block. Otherwise: the share of
/// stored blocks that ended up off the canonical chain.
pub fn orphan_proxy(r: &SimReport) -> f64 {
    if r.config.latency == Latency::Perfect {
        let total: u64 = r.blocks_per_second.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let extra: u64 = r.blocks_per_second.iter().map(|&c| c.saturating_sub(1)).sum();
        extra as f64 / total as f64
    } else if r.stored_blocks == 0 {
        0.0
    } else {
        r.orphan_count as f64 / r.stored_blocks as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessRow {
    pub account: AccountId,
    pub class: Class,
    pub power: f64,
    pub power_share: f64,
    pub reward: u64,
    pub reward_share: f64,
    pub relative_deviation: f64,
}

/// Reward share against power share, within each participant's class.
pub fn fairness(r: &SimReport) -> Vec<FairnessRow> {
    let mut rows = Vec::new();
    let mut push = |class: Class, parts: Vec<(AccountId, f64)>, rewards: &BTreeMap<AccountId, u64>| {
        let tp: f64 = parts.iter().map(|p| p.1).sum();
        let tr: u64 = rewards.values().sum();
        for (account, power) in parts {
            let reward = rewards.get(&account).copied().unwrap_or(0);
            let power_share = power / tp;
            let reward_share = if tr == 0 { 0.0 } else { reward as f64 / tr as f64 };
            rows.push(FairnessRow {
                account,
                class,
                power,
                power_share,
                reward,
                reward_share,
                relative_deviation: (reward_share - power_share).abs() / power_share,
            });
        }
    };
    push(
        Class::Pos,
        r.config.stakers.iter().map(|s| (s.account, s.stake as f64)).collect(),
        &r.pos_rewards,
    );
    push(
        Class::Pow,
        r.config.miners.iter().map(|m| (m.account, m.hash_power)).collect(),
        &r.pow_rewards,
    );
    rows
}

/// Proportionality score of one class, `None` when it earned nothing.
pub fn proportionality(r: &SimReport, class: Class) -> Option<f64> {
    let rows: Vec<FairnessRow> = fairness(r).into_iter().filter(|x| x.class == class).collect();
    let power: Vec<f64> = rows.iter().map(|x| x.power).collect();
    let reward: Vec<f64> = rows.iter().map(|x| x.reward as f64).collect();
    stats::proportionality_score(&power, &reward).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DifficultySummary {
    /// Time average of `d_s / d_w` after warm-up.
    pub ratio_time_avg: f64,
    /// Range of post-warm-up `d_w / (r * 2t)`.
    pub pow_norm_min: f64,
    pub pow_norm_max: f64,
    /// Range of post-warm-up `d_s / (b * 2t)`.
    pub pos_norm_min: f64,
    pub pos_norm_max: f64,
}

pub fn difficulty_summary(r: &SimReport) -> Option<DifficultySummary> {
    let cfg = &r.config;
    let w_target = cfg.total_hash() * 2.0 * cfg.t;
    let s_target = cfg.total_stake() as f64 * 2.0 * cfg.t;
    let (mut dw, mut ds) = (None::<f64>, None::<f64>);
    let (mut area, mut span) = (0.0, 0.0);
    let mut prev_t: Option<f64> = None;
    let mut w_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut s_range = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &r.difficulty_trace {
        if p.timestamp >= r.warmup_end {
            if let (Some(t0), Some(w), Some(s)) = (prev_t, dw, ds) {
                let dt = p.timestamp - t0.max(r.warmup_end);
                if dt > 0.0 {
                    area += dt * s / w;
                    span += dt;
                }
            }
            let (range, target) = match p.kind {
                BlockKind::Pos => (&mut s_range, s_target),
                _ => (&mut w_range, w_target),
            };
            let x = p.difficulty / target;
            *range = (range.0.min(x), range.1.max(x));
        }
        match p.kind {
            BlockKind::Pos => ds = Some(p.difficulty),
            _ => dw = Some(p.difficulty),
        }
        prev_t = Some(p.timestamp);
    }
    (span > 0.0).then_some(DifficultySummary {
        ratio_time_avg: area / span,
        pow_norm_min: w_range.0,
        pow_norm_max: w_range.1,
        pos_norm_min: s_range.0,
        pos_norm_max: s_range.1,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub config: SimConfig,
    pub total_blocks: u64,
    pub pos_blocks: u64,
    pub pow_blocks: u64,
    /// `|PoS - PoW| / total`.
    pub kind_imbalance: f64,
    pub stored_blocks: u64,
    pub produced_blocks: u64,
    pub orphan_count: u64,
    pub orphan_proxy: f64,
    pub warmup_end: f64,
    pub interarrivals: BTreeMap<String, Option<ClassStats>>,
    pub fairness: Vec<FairnessRow>,
    pub proportionality: BTreeMap<String, Option<f64>>,
    pub difficulty: Option<DifficultySummary>,
    pub canonical_tip: TipSummary,
    pub total_rewards: u64,
    pub future_rejections: u64,
    pub evidence_count: usize,
    pub dunkle: Option<BTreeMap<AccountId, f64>>,
}
