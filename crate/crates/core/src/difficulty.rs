//! Median-threshold multiplicative difficulty controller.
//!
//! Each block kind carries its own difficulty. After every block of a kind,
//! the gap between the two latest blocks of that kind is compared against the
//! median of an exponential with mean `2t`:
//!
//! * gap above the median: `d / (1 + alpha)`
//! * gap equal to the median: unchanged
//! * gap below the median: `d * (1 + alpha)`
//!
//! At equilibrium half the gaps land on each side of the median, which pins
//! the per-kind mean block time to `2t`.

use serde::{Deserialize, Serialize};

use crate::chain::BlockKind;

/// Smallest difficulty the controller will emit.
pub const DEFAULT_D_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyParams {
    /// Per-kind target gap `2t`, seconds.
    pub target_2t: f64,
    /// Learning rate.
    pub alpha: f64,
    pub d_min: f64,
    pub genesis_w: f64,
    pub genesis_s: f64,
}

impl DifficultyParams {
    /// Parameters for a combined target block time `t` (per-kind target `2t`),
    /// starting both difficulties at 1.
    pub fn for_block_time(t: f64, alpha: f64) -> Self {
        DifficultyParams {
            target_2t: 2.0 * t,
            alpha,
            d_min: DEFAULT_D_MIN,
            genesis_w: 1.0,
            genesis_s: 1.0,
        }
    }

    pub fn genesis(&self, kind: BlockKind) -> f64 {
        match kind {
            BlockKind::Pos => self.genesis_s,
            _ => self.genesis_w,
        }
    }
}

/// Median of `Exp(1 / 2t)`: `2t * ln 2`.
pub fn threshold(params: &DifficultyParams) -> f64 {
    params.target_2t * std::f64::consts::LN_2
}

/// One controller step from `d` given the observed same-kind gap.
pub fn adjust(d: f64, observed_dt: f64, params: &DifficultyParams) -> f64 {
    let thr = threshold(params);
    let next = if observed_dt > thr {
        d / (1.0 + params.alpha)
    } else if observed_dt < thr {
        d * (1.0 + params.alpha)
    } else {
        d
    };
    next.max(params.d_min)
}

/// Difficulty and timestamp of one block, as seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindSample {
    pub difficulty: f64,
    pub timestamp: f64,
}

/// The latest two blocks of one kind on a chain, newest first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KindHistory {
    pub last: Option<KindSample>,
    pub second_last: Option<KindSample>,
}

/// Difficulty a block of `kind` must carry when extending a chain whose
/// same-kind history is `history`.
pub fn expected_difficulty(history: &KindHistory, kind: BlockKind, params: &DifficultyParams) -> f64 {
    match (history.last, history.second_last) {
        (Some(b1), Some(b2)) => adjust(b1.difficulty, b1.timestamp - b2.timestamp, params),
        _ => params.genesis(kind),
    }
}

/// How a chain decides the difficulty a new block must carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DifficultyRule {
    /// The live controller, evaluated along each branch's own history.
    Adaptive(DifficultyParams),
    /// Constant per-kind difficulty, for attack calculus comparisons.
    Fixed { pow: f64, pos: f64 },
}

impl DifficultyRule {
    pub fn expected(&self, history: &KindHistory, kind: BlockKind) -> f64 {
        match self {
            DifficultyRule::Adaptive(params) => expected_difficulty(history, kind, params),
            DifficultyRule::Fixed { pow, pos } => match kind {
                BlockKind::Pos => *pos,
                _ => *pow,
            },
        }
    }
}
