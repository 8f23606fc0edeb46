//! Lead-based PoW withholding.
//!
//! The attacker mines PoW blocks on a private branch. Honest miners and all
//! stakers extend the public tip, so every honest PoS block lands on the
//! public branch only. The policy:
//!
//! * public branch heavier after an honest block: abandon the private branch;
//! * equal weight: publish everything and race, publishing the next private
//!   block at once;
//! * private heavier with a lead of at most one block: publish and win;
//! * otherwise keep withholding.
//!
//! The pure-PoW control is the same process with no stakers, run on the same
//! seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use super::{invalid, AttackError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfishConfig {
    /// Attacker share of total hash power, in `[0, 1]`.
    pub attacker_share: f64,
    /// Combined target block time.
    pub t: f64,
    /// Simulated seconds per trial.
    pub horizon: f64,
    pub trials: u64,
    pub base_seed: u64,
}

impl SelfishConfig {
    pub fn new(attacker_share: f64) -> Self {
        SelfishConfig {
            attacker_share,
            t: 10.0,
            horizon: 200_000.0,
            trials: 100,
            base_seed: 0,
        }
    }
}

/// Aggregate canonical counts over all trials of one variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SelfishRun {
    pub attacker_pow: u64,
    pub honest_pow: u64,
    pub pos_blocks: u64,
    pub orphaned_attacker: u64,
    pub orphaned_honest: u64,
    /// Attacker blocks orphaned by a public branch that contained PoS blocks.
    pub pos_interleaving_losses: u64,
}

impl SelfishRun {
    /// Attacker share of canonical PoW blocks.
    pub fn revenue_share(&self) -> f64 {
        let total = self.attacker_pow + self.honest_pow;
        if total == 0 { 0.0 } else { self.attacker_pow as f64 / total as f64 }
    }

    fn add(mut self, o: SelfishRun) -> SelfishRun {
        self.attacker_pow += o.attacker_pow;
        self.honest_pow += o.honest_pow;
        self.pos_blocks += o.pos_blocks;
        self.orphaned_attacker += o.orphaned_attacker;
        self.orphaned_honest += o.orphaned_honest;
        self.pos_interleaving_losses += o.pos_interleaving_losses;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfishOutcome {
    pub config: SelfishConfig,
    pub unity: SelfishRun,
    pub control: SelfishRun,
    pub unity_revenue_share: f64,
    pub control_revenue_share: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Branch {
    w: f64,
    s: f64,
    attacker_pow: u64,
    honest_pow: u64,
    pos: u64,
}

impl Branch {
    fn blocks(&self) -> u64 {
        self.attacker_pow + self.honest_pow + self.pos
    }
}

struct Race {
    base_w: f64,
    base_s: f64,
    private: Branch,
    public: Branch,
    racing: bool,
    run: SelfishRun,
}

impl Race {
    fn product(&self, b: &Branch) -> f64 {
        (self.base_w + b.w) * (self.base_s + b.s)
    }

    fn resolve(&mut self, attacker_wins: bool) {
        let (win, lose) = if attacker_wins {
            (self.private, self.public)
        } else {
            (self.public, self.private)
        };
        self.run.attacker_pow += win.attacker_pow;
        self.run.honest_pow += win.honest_pow;
        self.run.pos_blocks += win.pos;
        self.run.orphaned_attacker += lose.attacker_pow;
        self.run.orphaned_honest += lose.honest_pow + lose.pos;
        if !attacker_wins && self.public.pos > 0 {
            self.run.pos_interleaving_losses += self.private.attacker_pow;
        }
        self.base_w += win.w;
        self.base_s += win.s;
        self.private = Branch::default();
        self.public = Branch::default();
        self.racing = false;
    }

    fn after_attacker_block(&mut self) {
        if self.racing {
            self.resolve(true);
        }
    }

    fn after_honest_block(&mut self) {
        if self.private.blocks() == 0 {
            self.resolve(false);
            return;
        }
        let (a, p) = (self.product(&self.private), self.product(&self.public));
        if a < p {
            self.resolve(false);
        } else if a == p {
            self.racing = true;
        } else if self.private.blocks().saturating_sub(self.public.blocks()) <= 1 {
            self.resolve(true);
        }
    }
}

fn run_one(hash_attacker: f64, hash_honest: f64, stake: f64, t: f64, horizon: f64, seed: u64) -> SelfishRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_w = (hash_attacker + hash_honest) * 2.0 * t;
    let d_s = 2.0 * t;
    let rates = [hash_attacker / d_w, hash_honest / d_w, stake / d_s];
    let total: f64 = rates.iter().sum();
    let mut race = Race {
        base_w: 1.0,
        base_s: 1.0,
        private: Branch::default(),
        public: Branch::default(),
        racing: false,
        run: SelfishRun::default(),
    };
    if total > 0.0 {
        let exp = Exp::new(total).expect("positive rate");
        let mut now = 0.0;
        loop {
            now += exp.sample(&mut rng);
            if now > horizon {
                break;
            }
            let u = rng.random::<f64>() * total;
            if u < rates[0] {
                race.private.w += d_w;
                race.private.attacker_pow += 1;
                race.after_attacker_block();
            } else if u < rates[0] + rates[1] {
                race.public.w += d_w;
                race.public.honest_pow += 1;
                race.after_honest_block();
            } else {
                race.public.s += d_s;
                race.public.pos += 1;
                race.after_honest_block();
            }
        }
    }
    // Everything withheld is published at the end.
    let wins = race.product(&race.private) > race.product(&race.public);
    race.resolve(wins);
    race.run
}

/// Runs the Unity variant (unit stake) and the pure-PoW control on seeds
/// `base_seed..base_seed + trials`.
pub fn run_selfish_mining(cfg: &SelfishConfig) -> Result<SelfishOutcome, AttackError> {
    if !(0.0..=1.0).contains(&cfg.attacker_share) {
        return Err(invalid("attacker_share", format!("must lie in [0, 1], got {}", cfg.attacker_share)));
    }
    if !(cfg.t > 0.0 && cfg.horizon >= 0.0) {
        return Err(invalid("t", "block time must be positive and horizon non-negative"));
    }
    let (a, h) = (cfg.attacker_share, 1.0 - cfg.attacker_share);
    let agg = |stake: f64| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| run_one(a, h, stake, cfg.t, cfg.horizon, cfg.base_seed.wrapping_add(i)))
            .reduce(SelfishRun::default, SelfishRun::add)
    };
    let unity = agg(1.0);
    let control = agg(0.0);
    Ok(SelfishOutcome {
        config: *cfg,
        unity,
        control,
        unity_revenue_share: unity.revenue_share(),
        control_revenue_share: control.revenue_share(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(share: f64) -> SelfishConfig {
        SelfishConfig {
            trials: 20,
            horizon: 50_000.0,
            ..SelfishConfig::new(share)
        }
    }

    #[test]
    fn extremes() {
        let none = run_selfish_mining(&cfg(0.0)).unwrap();
        assert_eq!(none.unity_revenue_share, 0.0);
        assert_eq!(none.unity.orphaned_attacker, 0);
        let all = run_selfish_mining(&cfg(1.0)).unwrap();
        assert_eq!(all.unity_revenue_share, 1.0);
        assert_eq!(all.control_revenue_share, 1.0);
    }

    #[test]
    fn unity_does_not_reward_withholding_more_than_pow() {
        let o = run_selfish_mining(&cfg(0.33)).unwrap();
        assert!(o.unity_revenue_share <= o.control_revenue_share, "{o:?}");
        assert!(o.unity.pos_interleaving_losses > 0);
        assert_eq!(o.control.pos_blocks, 0);
    }

    #[test]
    fn control_tracks_block_rate() {
        let o = run_selfish_mining(&cfg(0.2)).unwrap();
        let produced = o.control.attacker_pow + o.control.honest_pow + o.control.orphaned_attacker + o.control.orphaned_honest;
        let expected = 20.0 * 50_000.0 / 20.0;
        assert!((produced as f64 / expected - 1.0).abs() < 0.05, "{produced}");
    }

    #[test]
    fn invalid_share_rejected() {
        assert!(run_selfish_mining(&cfg(-0.1)).is_err());
    }
}
