//! Simulation configuration and its flat `key = value` file format.
//!
//! ```text
//! # month-long baseline
//! t = 10
//! alpha = 0.01
//! duration = 2592000
//! stakers = 160, 80, 40, 30, 20, 10, 10, 10, 10, 10
//! miners = 16, 8, 4, 3, 2, 1, 1, 1, 1, 1
//! latency = perfect
//! ```
//!
//! Participant lists take bare amounts (ids assigned in order) or `id:amount`
//! pairs. Unknown keys are rejected.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::AccountId;
use crate::difficulty::{DifficultyParams, DEFAULT_D_MIN};

/// First id handed to stakers listed without explicit ids.
pub const FIRST_STAKER_ID: u64 = 1;
/// First id handed to miners listed without explicit ids.
pub const FIRST_MINER_ID: u64 = 1001;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Latency {
    Perfect,
    Fixed { seconds: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl FromStr for Latency {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("bad number `{p}`: {e}"));
        match parts.as_slice() {
            ["perfect"] => Ok(Latency::Perfect),
            ["fixed", secs] => Ok(Latency::Fixed { seconds: num(secs)? }),
            ["uniform", lo, hi] => Ok(Latency::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            }),
            _ => Err(format!("expected perfect, fixed:SECS or uniform:LO:HI, got `{s}`")),
        }
    }
}

impl fmt::Display for Latency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Latency::Perfect => f.write_str("perfect"),
            Latency::Fixed { seconds } => write!(f, "fixed:{seconds}"),
            Latency::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SlashingMode {
    #[default]
    Off,
    /// Run the hard-evidence detectors over the final tree.
    Evidence,
    /// Evidence plus Dunkle settlement with penalty `n * R`.
    Dunkle { n: f64 },
}

impl FromStr for SlashingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().split(':').collect::<Vec<_>>().as_slice() {
            ["off"] => Ok(SlashingMode::Off),
            ["evidence"] => Ok(SlashingMode::Evidence),
            ["dunkle", n] => {
                let n: f64 = n.trim().parse().map_err(|e| format!("bad n `{n}`: {e}"))?;
                if n > 0.0 {
                    Ok(SlashingMode::Dunkle { n })
                } else {
                    Err("dunkle n must be positive".into())
                }
            }
            _ => Err(format!("expected off, evidence or dunkle:N, got `{s}`")),
        }
    }
}

impl fmt::Display for SlashingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlashingMode::Off => f.write_str("off"),
            SlashingMode::Evidence => f.write_str("evidence"),
            SlashingMode::Dunkle { n } => write!(f, "dunkle:{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Staker {
    pub account: AccountId,
    pub stake: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Miner {
    pub account: AccountId,
    pub hash_power: f64,
}

/// Scales every miner's configured hash power by `factor` from time `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashChange {
    pub at: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Combined target block time; each kind targets `2t`.
    pub t: f64,
    pub alpha: f64,
    /// Maturation delay in heights.
    #[serde(rename = "T")]
    pub maturation: u64,
    /// Withdrawal delay in heights.
    #[serde(rename = "W")]
    pub withdrawal: u64,
    pub t_future: f64,
    /// Simulated seconds.
    pub duration: f64,
    pub stakers: Vec<Staker>,
    pub miners: Vec<Miner>,
    pub latency: Latency,
    pub block_reward: u64,
    pub rng_seed: u64,
    /// Same-kind canonical blocks excluded from steady-state statistics.
    pub warmup_blocks: u64,
    pub d_genesis_w: f64,
    pub d_genesis_s: f64,
    pub d_min: f64,
    pub slashing: SlashingMode,
    pub hash_changes: Vec<HashChange>,
}

impl SimConfig {
    /// The month-long baseline with the ten-staker, ten-miner power vectors.
    pub fn baseline() -> Self {
        let stakes = [160, 80, 40, 30, 20, 10, 10, 10, 10, 10];
        let hashes = [16.0, 8.0, 4.0, 3.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        SimConfig {
            stakers: stakes
                .iter()
                .enumerate()
                .map(|(i, &stake)| Staker {
                    account: AccountId(FIRST_STAKER_ID + i as u64),
                    stake,
                })
                .collect(),
            miners: hashes
                .iter()
                .enumerate()
                .map(|(i, &hash_power)| Miner {
                    account: AccountId(FIRST_MINER_ID + i as u64),
                    hash_power,
                })
                .collect(),
            ..SimConfig::with_defaults(10.0, 30.0 * SECONDS_PER_DAY)
        }
    }

    /// Defaults for everything except participants, which start empty.
    pub fn with_defaults(t: f64, duration: f64) -> Self {
        SimConfig {
            t,
            alpha: 0.01,
            maturation: 100,
            withdrawal: 100,
            t_future: 15.0,
            duration,
            stakers: Vec::new(),
            miners: Vec::new(),
            latency: Latency::Perfect,
            block_reward: 1,
            rng_seed: 0,
            warmup_blocks: 2000,
            d_genesis_w: 1.0,
            d_genesis_s: 1.0,
            d_min: DEFAULT_D_MIN,
            slashing: SlashingMode::Off,
            hash_changes: Vec::new(),
        }
    }

    pub fn difficulty_params(&self) -> DifficultyParams {
        DifficultyParams {
            target_2t: 2.0 * self.t,
            alpha: self.alpha,
            d_min: self.d_min,
            genesis_w: self.d_genesis_w,
            genesis_s: self.d_genesis_s,
        }
    }

    pub fn total_stake(&self) -> u64 {
        self.stakers.iter().map(|s| s.stake).sum()
    }

    pub fn total_hash(&self) -> f64 {
        self.miners.iter().map(|m| m.hash_power).sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        positive("t", self.t)?;
        positive("alpha", self.alpha)?;
        positive("duration", self.duration)?;
        positive("d_genesis_w", self.d_genesis_w)?;
        positive("d_genesis_s", self.d_genesis_s)?;
        positive("d_min", self.d_min)?;
        if !(self.t_future >= 0.0) {
            return Err(invalid("t_future", "must be non-negative"));
        }
        if self.maturation < 1 {
            return Err(invalid("T", "must be at least 1"));
        }
        if self.withdrawal < 1 {
            return Err(invalid("W", "must be at least 1"));
        }
        if self.stakers.is_empty() && self.miners.is_empty() {
            return Err(invalid("stakers", "no participants"));
        }
        if let Some(s) = self.stakers.iter().find(|s| s.stake == 0) {
            return Err(invalid("stakers", format!("account {} has zero stake", s.account)));
        }
        if let Some(m) = self.miners.iter().find(|m| !(m.hash_power > 0.0 && m.hash_power.is_finite())) {
            return Err(invalid("miners", format!("account {} has non-positive hash power", m.account)));
        }
        for (field, ids) in [
            ("stakers", self.stakers.iter().map(|s| s.account).collect::<Vec<_>>()),
            ("miners", self.miners.iter().map(|m| m.account).collect()),
        ] {
            let mut sorted = ids.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != ids.len() {
                return Err(invalid(field, "duplicate account id"));
            }
        }
        match self.latency {
            Latency::Perfect => {}
            Latency::Fixed { seconds } if seconds >= 0.0 && seconds.is_finite() => {}
            Latency::Uniform { lo, hi } if lo >= 0.0 && lo <= hi && hi.is_finite() => {}
            _ => return Err(invalid("latency", "delays must be finite, non-negative and lo <= hi")),
        }
        for c in &self.hash_changes {
            if !(c.at >= 0.0 && c.factor > 0.0 && c.factor.is_finite()) {
                return Err(invalid("hash_changes", "need at >= 0 and factor > 0"));
            }
        }
        Ok(())
    }

    /// Parses and validates a config file.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = SimConfig::with_defaults(0.0, 0.0);
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey(key.to_string()));
            }
            cfg.set(key, value)?;
            seen.push(key.to_string());
        }
        for required in ["t", "duration", "stakers", "miners"] {
            if !seen.iter().any(|k| k == required) {
                return Err(ConfigError::MissingField(required));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            v.parse().map_err(|e: T::Err| invalid(key, format!("`{v}`: {e}")))
        }
        match key {
            "t" => self.t = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "T" => self.maturation = num(key, value)?,
            "W" => self.withdrawal = num(key, value)?,
            "t_future" => self.t_future = num(key, value)?,
            "duration" => self.duration = num(key, value)?,
            "block_reward" => self.block_reward = num(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            "warmup_blocks" => self.warmup_blocks = num(key, value)?,
            "d_genesis_w" => self.d_genesis_w = num(key, value)?,
            "d_genesis_s" => self.d_genesis_s = num(key, value)?,
            "d_min" => self.d_min = num(key, value)?,
            "latency" => self.latency = value.parse().map_err(|e: String| invalid(key, e))?,
            "slashing" => self.slashing = value.parse().map_err(|e: String| invalid(key, e))?,
            "stakers" => {
                self.stakers = parse_participants(key, value, FIRST_STAKER_ID)?
                    .into_iter()
                    .map(|(account, amount)| {
                        if amount.fract() != 0.0 || amount < 0.0 {
                            Err(invalid(key, format!("stake must be a whole amount, got {amount}")))
                        } else {
                            Ok(Staker {
                                account,
                                stake: amount as u64,
                            })
                        }
                    })
                    .collect::<Result<_, _>>()?
            }
            "miners" => {
                self.miners = parse_participants(key, value, FIRST_MINER_ID)?
                    .into_iter()
                    .map(|(account, hash_power)| Miner { account, hash_power })
                    .collect()
            }
            "hash_changes" => {
                self.hash_changes = split_list(value)
                    .map(|item| {
                        let (at, factor) = item
                            .split_once(':')
                            .ok_or_else(|| invalid(key, format!("expected AT:FACTOR, got `{item}`")))?;
                        Ok(HashChange {
                            at: num(key, at.trim())?,
                            factor: num(key, factor.trim())?,
                        })
                    })
                    .collect::<Result<_, ConfigError>>()?
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Renders the config in the file format accepted by [`SimConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let list = |items: Vec<String>| items.join(", ");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("t", self.t.to_string());
        kv("alpha", self.alpha.to_string());
        kv("T", self.maturation.to_string());
        kv("W", self.withdrawal.to_string());
        kv("t_future", self.t_future.to_string());
        kv("duration", self.duration.to_string());
        kv(
            "stakers",
            list(self.stakers.iter().map(|s| format!("{}:{}", s.account, s.stake)).collect()),
        );
        kv(
            "miners",
            list(self.miners.iter().map(|m| format!("{}:{}", m.account, m.hash_power)).collect()),
        );
        kv("latency", self.latency.to_string());
        kv("block_reward", self.block_reward.to_string());
        kv("rng_seed", self.rng_seed.to_string());
        kv("warmup_blocks", self.warmup_blocks.to_string());
        kv("d_genesis_w", self.d_genesis_w.to_string());
        kv("d_genesis_s", self.d_genesis_s.to_string());
        kv("d_min", self.d_min.to_string());
        kv("slashing", self.slashing.to_string());
        if !self.hash_changes.is_empty() {
            kv(
                "hash_changes",
                list(self.hash_changes.iter().map(|c| format!("{}:{}", c.at, c.factor)).collect()),
            );
        }
        out
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_participants(key: &str, value: &str, first_id: u64) -> Result<Vec<(AccountId, f64)>, ConfigError> {
    split_list(value)
        .enumerate()
        .map(|(i, item)| {
            let (id, amount) = match item.split_once(':') {
                Some((id, amount)) => (
                    id.trim()
                        .parse::<u64>()
                        .map_err(|e| invalid(key, format!("bad id `{id}`: {e}")))?,
                    amount.trim(),
                ),
                None => (first_id + i as u64, item),
            };
            let amount: f64 = amount
                .parse()
                .map_err(|e| invalid(key, format!("bad amount `{amount}`: {e}")))?;
            Ok((AccountId(id), amount))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASELINE: &str = "
        # comment
        t = 10
        alpha = 0.01
        duration = 2592000
        stakers = 160, 80, 40, 30, 20, 10, 10, 10, 10, 10
        miners = 16, 8, 4, 3, 2, 1, 1, 1, 1, 1
    ";

    #[test]
    fn parses_baseline() {
        let cfg = SimConfig::parse(BASELINE).unwrap();
        assert_eq!(cfg, SimConfig::baseline());
        assert_eq!(cfg.total_stake(), 380);
        assert_eq!(cfg.total_hash(), 38.0);
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = SimConfig::baseline();
        cfg.latency = Latency::Uniform { lo: 0.1, hi: 0.5 };
        cfg.slashing = SlashingMode::Dunkle { n: 2.0 };
        cfg.hash_changes = vec![HashChange { at: 100.0, factor: 0.5 }];
        assert_eq!(SimConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
    }

    #[test]
    fn errors() {
        assert_eq!(
            SimConfig::parse("t = 10\nstakers = 1\nminers = 1"),
            Err(ConfigError::MissingField("duration"))
        );
        assert_eq!(
            SimConfig::parse(&format!("{BASELINE}\ntypo = 3")),
            Err(ConfigError::UnknownKey("typo".into()))
        );
        assert!(matches!(
            SimConfig::parse("t = 10\nduration = 0\nstakers = 1\nminers = 1"),
            Err(ConfigError::Invalid { field, .. }) if field == "duration"
        ));
        assert_eq!(SimConfig::parse("t 10"), Err(ConfigError::Syntax { line: 1 }));
        assert!(SimConfig::parse(&format!("{BASELINE}\nlatency = uniform:2:1")).is_err());
        assert!(SimConfig::parse(&format!("{BASELINE}\nt = 5")).is_err());
    }

    #[test]
    fn explicit_ids() {
        let cfg = SimConfig::parse("t = 1\nduration = 5\nstakers = 7:100\nminers = 7:2.5").unwrap();
        assert_eq!(cfg.stakers[0].account, AccountId(7));
        assert_eq!(cfg.miners[0].hash_power, 2.5);
    }

    #[test]
    fn latency_and_slashing_flags() {
        assert_eq!("fixed:0.5".parse::<Latency>(), Ok(Latency::Fixed { seconds: 0.5 }));
        assert!("fast".parse::<Latency>().is_err());
        assert_eq!("dunkle:2".parse::<SlashingMode>(), Ok(SlashingMode::Dunkle { n: 2.0 }));
        assert!("dunkle:0".parse::<SlashingMode>().is_err());
    }
}
