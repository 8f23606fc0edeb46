//! Adversary strategies and closed-form attack calculators.
//!
//! * [`race`]: private double-spend race and its closed-form feasibility test
//! * [`lra`]: PoS-only long-range rewrite from deep history
//! * [`selfish`]: lead-based PoW withholding against a pure-PoW control
//! * [`split_stake`]: undetectable nothing-at-stake via account splitting
//! * [`future_game`]: the four-player future-timestamp game

pub mod future_game;
pub mod lra;
pub mod race;
pub mod selfish;
pub mod split_stake;

use serde::{Deserialize, Serialize};

pub use future_game::{run_future_mining_game, FutureGameConfig, FutureGameTranscript, GameEvent, WeightAccounting, WeightTerm};
pub use lra::{lra_omega_bound, run_long_range_attack, LraConfig, LraOutcome};
pub use race::{
    double_spend_feasible, double_spend_lhs, private_double_spend_trials, run_private_double_spend, AttackSetup,
    DifficultyMode, RaceConfig, TrialSummary,
};
pub use selfish::{run_selfish_mining, SelfishConfig, SelfishOutcome, SelfishRun};
pub use split_stake::{run_split_stake_nas, SplitStakeConfig, SplitStakeReport};

/// Weight products of both chains at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub attacker: f64,
    pub honest: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    /// Attacker product strictly above honest product at the horizon.
    pub attacker_won: bool,
    /// First instant the attacker product strictly exceeded the honest one.
    pub crossing_time: Option<f64>,
    pub final_attacker: f64,
    pub final_honest: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Writes `trial,time,attacker,honest` rows.
pub fn write_trajectories_csv<W: std::io::Write>(mut w: W, outcomes: &[AttackOutcome]) -> std::io::Result<()> {
    writeln!(w, "trial,time,attacker,honest")?;
    for (i, o) in outcomes.iter().enumerate() {
        for p in &o.trajectory {
            writeln!(w, "{},{},{},{}", i, p.time, p.attacker, p.honest)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttackError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Config(#[from] crate::sim::ConfigError),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> AttackError {
    AttackError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
