//! Private double-spend race.
//!
//! From a fork point with weights `(td_wc, td_sc)` the attacker grows a
//! private chain with hash `a` and stake `b` while honest nodes grow theirs
//! with `c` and `d`. Each chain's expected `td_w` grows by its hash power per
//! second and `td_s` by its stake, so the attacker leads after `t` seconds in
//! expectation exactly when
//!
//! ```text
//! td_sc (a - c) + td_wc (b - d) + (ab - cd) t > 0
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AttackOutcome, TrajectoryPoint};
use crate::chain::BlockKind;
use crate::difficulty::{expected_difficulty, DifficultyParams, KindHistory, KindSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSetup {
    /// Attacker hash power.
    pub a: f64,
    /// Attacker stake.
    pub b: f64,
    /// Honest hash power.
    pub c: f64,
    /// Honest stake.
    pub d: f64,
    pub td_wc: f64,
    pub td_sc: f64,
    /// Seconds after the fork at which the chains are compared.
    pub horizon: f64,
}

/// Left-hand side of the feasibility inequality at `t = horizon`.
pub fn double_spend_lhs(s: &AttackSetup) -> f64 {
    s.td_sc * (s.a - s.c) + s.td_wc * (s.b - s.d) + (s.a * s.b - s.c * s.d) * s.horizon
}

/// `(lhs, lhs > 0)`. Equality is infeasible: ties go to the incumbent.
pub fn double_spend_feasible(s: &AttackSetup) -> (f64, bool) {
    let lhs = double_spend_lhs(s);
    (lhs, lhs > 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DifficultyMode {
    /// Constant per-kind difficulty on both chains.
    Frozen { d_w: f64, d_s: f64 },
    /// Each chain runs the controller along its own history, starting from
    /// the genesis difficulties in the params.
    Live(DifficultyParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaceConfig {
    pub mode: DifficultyMode,
    pub record_trajectory: bool,
}

impl RaceConfig {
    /// Frozen at the difficulties that give the combined network one block
    /// of each kind per `2t` seconds.
    pub fn frozen_equilibrium(s: &AttackSetup, t: f64) -> Self {
        RaceConfig {
            mode: DifficultyMode::Frozen {
                d_w: (s.a + s.c) * 2.0 * t,
                d_s: (s.b + s.d) * 2.0 * t,
            },
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct KindState {
    d: f64,
    history: KindHistory,
}

impl KindState {
    fn record(&mut self, ts: f64, kind: BlockKind, mode: &DifficultyMode) {
        self.history = KindHistory {
            second_last: self.history.last,
            last: Some(KindSample {
                difficulty: self.d,
                timestamp: ts,
            }),
        };
        if let DifficultyMode::Live(p) = mode {
            self.d = expected_difficulty(&self.history, kind, p);
        }
    }
}

/// One growing chain in a race.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RaceChain {
    pub td_w: f64,
    pub td_s: f64,
    hash: f64,
    stake: f64,
    w: KindState,
    s: KindState,
}

impl RaceChain {
    fn new(td_w: f64, td_s: f64, hash: f64, stake: f64, mode: &DifficultyMode) -> Self {
        let (dw, ds) = match *mode {
            DifficultyMode::Frozen { d_w, d_s } => (d_w, d_s),
            DifficultyMode::Live(p) => (p.genesis_w, p.genesis_s),
        };
        let ks = |d| KindState {
            d,
            history: KindHistory::default(),
        };
        RaceChain {
            td_w,
            td_s,
            hash,
            stake,
            w: ks(dw),
            s: ks(ds),
        }
    }

    pub fn product(&self) -> f64 {
        self.td_w * self.td_s
    }

    fn rates(&self) -> [f64; 2] {
        [self.hash / self.w.d, self.stake / self.s.d]
    }

    fn extend(&mut self, kind: BlockKind, ts: f64, mode: &DifficultyMode) {
        match kind {
            BlockKind::Pos => {
                self.td_s += self.s.d;
                self.s.record(ts, kind, mode);
            }
            _ => {
                self.td_w += self.w.d;
                self.w.record(ts, kind, mode);
            }
        }
    }
}

/// Simulates both chains from the fork to the horizon.
pub fn run_private_double_spend(setup: &AttackSetup, race: &RaceConfig, seed: u64) -> AttackOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mode = race.mode;
    let mut chains = [
        RaceChain::new(setup.td_wc, setup.td_sc, setup.a, setup.b, &mode),
        RaceChain::new(setup.td_wc, setup.td_sc, setup.c, setup.d, &mode),
    ];
    let mut trajectory = Vec::new();
    let mut point = |t: f64, ch: &[RaceChain; 2]| {
        if race.record_trajectory {
            trajectory.push(TrajectoryPoint {
                time: t,
                attacker: ch[0].product(),
                honest: ch[1].product(),
            });
        }
    };
    point(0.0, &chains);
    let mut crossing = None;
    let mut now = 0.0;
    loop {
        let rates: Vec<f64> = chains.iter().flat_map(|c| c.rates()).collect();
        let total: f64 = rates.iter().sum();
        if !(total > 0.0) {
            break;
        }
        now += Exp::new(total).expect("positive rate").sample(&mut rng);
        if now > setup.horizon {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut which = rates.len() - 1;
        for (i, r) in rates.iter().enumerate() {
            if pick < *r {
                which = i;
                break;
            }
            pick -= r;
        }
        let kind = if which.is_multiple_of(2) { BlockKind::Pow } else { BlockKind::Pos };
        chains[which / 2].extend(kind, now, &mode);
        if crossing.is_none() && chains[0].product() > chains[1].product() {
            crossing = Some(now);
        }
        point(now, &chains);
    }
    AttackOutcome {
        attacker_won: chains[0].product() > chains[1].product(),
        crossing_time: crossing,
        final_attacker: chains[0].product(),
        final_honest: chains[1].product(),
        trajectory,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub setup: AttackSetup,
    pub lhs: f64,
    pub feasible: bool,
    pub trials: u64,
    pub wins: u64,
    pub win_rate: f64,
    pub outcomes: Vec<AttackOutcome>,
}

/// Runs seeds `base_seed..base_seed + trials` in parallel. Outcomes are kept
/// in seed order.
pub fn private_double_spend_trials(setup: &AttackSetup, race: &RaceConfig, trials: u64, base_seed: u64) -> TrialSummary {
    let outcomes: Vec<AttackOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| run_private_double_spend(setup, race, base_seed.wrapping_add(i)))
        .collect();
    let wins = outcomes.iter().filter(|o| o.attacker_won).count() as u64;
    let (lhs, feasible) = double_spend_feasible(setup);
    TrialSummary {
        setup: *setup,
        lhs,
        feasible,
        trials,
        wins,
        win_rate: if trials == 0 { 0.0 } else { wins as f64 / trials as f64 },
        outcomes,
    }
}
