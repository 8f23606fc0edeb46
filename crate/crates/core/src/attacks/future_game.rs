//! The four-player future-timestamp game.
//!
//! Alice and Bob stake; Charlie and David mine with equal hash power. Bob
//! publishes his PoS block at `t0` although its forced timestamp is the
//! later `t_b`. Charlie refuses future blocks, David accepts them. Both
//! miners find a block at `t_x`, Alice forges at `t_a`, and the weights of
//! the two chains are itemized at `t_x` and `t_a`.

use std::collections::HashMap;

use serde::Serialize;

use super::{invalid, AttackError};
use crate::chain::{Block, BlockId, BlockKind, BlockTemplate, BlockTree, ChainRules, ImportError, Provenance};
use crate::crypto::{AccountId, KeyPair, Oracle};
use crate::difficulty::DifficultyRule;
use crate::forging::{build_pow_block, forge_pos_block, pos_ticket, MinerContext, PosTicket, SeedChainCheck, StakerContext};
use crate::ledger::Ledger;

const ALICE: AccountId = AccountId(1);
const BOB: AccountId = AccountId(2);
const CHARLIE: AccountId = AccountId(3);
const DAVID: AccountId = AccountId(4);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FutureGameConfig {
    /// First oracle seed tried; later seeds are tried until the game's
    /// timing preconditions hold.
    pub seed: u64,
    pub t_future: f64,
    pub d_w: f64,
    pub d_s: f64,
    pub alice_stake: u64,
    pub bob_stake: u64,
    /// Without Bob nobody publishes early.
    pub bob_present: bool,
}

impl Default for FutureGameConfig {
    fn default() -> Self {
        FutureGameConfig {
            seed: 0,
            t_future: 1.0,
            d_w: 20.0,
            d_s: 20.0,
            alice_stake: 1,
            bob_stake: 1,
            bob_present: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameEvent {
    pub time: f64,
    pub description: String,
}

/// One block's contribution to a chain's weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightTerm {
    pub block: String,
    pub kind: BlockKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightAccounting {
    pub time: f64,
    pub chain_c: Vec<WeightTerm>,
    pub chain_d: Vec<WeightTerm>,
    /// Sum of per-block weights.
    pub sum_c: f64,
    pub sum_d: f64,
    /// Fork-choice products `td_w * td_s`.
    pub product_c: f64,
    pub product_d: f64,
}

impl WeightAccounting {
    fn new(time: f64, chain_c: Vec<WeightTerm>, chain_d: Vec<WeightTerm>, tree: &BlockTree, tips: (BlockId, BlockId)) -> Self {
        let product = |id| tree.entry(&id).expect("stored").weight.product();
        WeightAccounting {
            time,
            sum_c: chain_c.iter().map(|t| t.weight).sum(),
            sum_d: chain_d.iter().map(|t| t.weight).sum(),
            chain_c,
            chain_d,
            product_c: product(tips.0),
            product_d: product(tips.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FutureGameTranscript {
    pub config: FutureGameConfig,
    /// Oracle seed actually used.
    pub seed: u64,
    pub t0: f64,
    pub t_x: f64,
    pub t_a: f64,
    pub t_b: f64,
    pub events: Vec<GameEvent>,
    /// Charlie's view refused Bob's block at `t0`.
    pub charlie_rejected_future: bool,
    /// Why Alice's block cannot sit on David's PoW block, if it cannot.
    pub s1a_on_w1d_error: Option<String>,
    pub s1a_parent_is_w1c: bool,
    pub at_tx: WeightAccounting,
    pub at_ta: WeightAccounting,
    /// Whether Charlie's and David's canonical tips matched after each event.
    pub views_agree: Vec<bool>,
}

impl FutureGameTranscript {
    /// `W(B_s1b) + W(B_w1d) - W(B_w1c)` from the itemized terms.
    pub fn itemized_gap_at_tx(&self) -> f64 {
        let w = |name: &str| {
            self.at_tx
                .chain_c
                .iter()
                .chain(&self.at_tx.chain_d)
                .find(|t| t.block == name)
                .map_or(0.0, |t| t.weight)
        };
        w("B_s1b") + w("B_w1d") - w("B_w1c")
    }

    /// The expected weight accounting, checked term by term.
    pub fn matches_expected_accounting(&self) -> bool {
        if !self.config.bob_present {
            return self.views_agree.iter().all(|&a| a);
        }
        self.charlie_rejected_future
            && self.s1a_on_w1d_error.is_some()
            && self.s1a_parent_is_w1c
            && self.at_tx.sum_d > self.at_tx.sum_c
            && self.at_tx.sum_d - self.at_tx.sum_c == self.itemized_gap_at_tx()
            && self.at_tx.product_d > self.at_tx.product_c
            && self.at_ta.sum_c == self.at_ta.sum_d
            && self.at_ta.product_c == self.at_ta.product_d
    }
}

struct Setup {
    seed: u64,
    oracle: Oracle,
    ledger: Ledger,
    keys: HashMap<AccountId, KeyPair>,
    rules: ChainRules,
    genesis: Block,
    alice: PosTicket,
    bob: PosTicket,
}

fn setup(cfg: &FutureGameConfig, seed: u64) -> Setup {
    let oracle = Oracle::new(seed);
    let mut ledger = Ledger::new(1, 1).expect("valid delays");
    ledger.credit_active(ALICE, cfg.alice_stake);
    ledger.credit_active(BOB, cfg.bob_stake);
    let keys: HashMap<_, _> = [ALICE, BOB].into_iter().map(|a| (a, oracle.keypair(a))).collect();
    let rules = ChainRules::new(
        DifficultyRule::Fixed {
            pow: cfg.d_w,
            pos: cfg.d_s,
        },
        cfg.t_future,
    );
    let genesis = Block::genesis(oracle.genesis_seed(), 0.0);
    let tree = BlockTree::new(genesis.clone(), rules);
    let ticket = |a| {
        pos_ticket(&tree, &genesis.id, &StakerContext::new(keys[&a].clone()), &oracle, &ledger)
            .expect("genesis stored")
            .expect("positive stake")
    };
    let (alice, bob) = (ticket(ALICE), ticket(BOB));
    Setup {
        seed,
        oracle,
        ledger,
        keys,
        rules,
        genesis,
        alice,
        bob,
    }
}

fn term(name: &str, b: &Block) -> WeightTerm {
    WeightTerm {
        block: name.to_string(),
        kind: b.kind,
        weight: b.difficulty,
    }
}

pub fn run_future_mining_game(cfg: &FutureGameConfig) -> Result<FutureGameTranscript, AttackError> {
    if !(cfg.d_w > 0.0 && cfg.d_s > 0.0 && cfg.t_future >= 0.0) {
        return Err(invalid("config", "difficulties must be positive and t_future non-negative"));
    }
    if cfg.alice_stake == 0 || cfg.bob_stake == 0 {
        return Err(invalid("stake", "Alice and Bob need stake"));
    }
    // Bob's block must actually be in the future at t0.
    let s = (cfg.seed..cfg.seed.saturating_add(10_000))
        .map(|seed| setup(cfg, seed))
        .find(|s| s.bob.eligible_at > cfg.t_future)
        .ok_or_else(|| invalid("seed", "no seed within 10000 tries gives t_b > t_future"))?;

    let t0 = 0.0;
    let (t_a, t_b) = (s.alice.eligible_at, s.bob.eligible_at);
    let t_x = t_a.min(t_b) / 2.0;
    let check = SeedChainCheck {
        oracle: &s.oracle,
        keys: &s.keys,
        stake: &s.ledger,
    };
    let mut charlie = BlockTree::new(s.genesis.clone(), s.rules);
    let mut david = BlockTree::new(s.genesis.clone(), s.rules);
    david.set_enforce_future(false);
    let mut events = Vec::new();
    let mut views_agree = Vec::new();
    let g = s.genesis.id;

    // EVENT 0
    let mut charlie_rejected_future = false;
    let s1b = if cfg.bob_present {
        let b = forge_pos_block(&s.genesis, &s.bob, t0, Vec::new(), Provenance::Adversarial).expect("early publish");
        charlie_rejected_future = matches!(charlie.import_checked(b.clone(), t0, &check), Err(ImportError::Future { .. }));
        david.import_checked(b.clone(), t0, &check).expect("David accepts future blocks");
        events.push(GameEvent {
            time: t0,
            description: format!("Bob publishes B_s1b stamped {t_b}; Charlie rejects: {charlie_rejected_future}"),
        });
        Some(b)
    } else {
        events.push(GameEvent {
            time: t0,
            description: "no early block is published".into(),
        });
        None
    };
    views_agree.push(charlie.canonical_tip() == david.canonical_tip());

    // EVENT 1
    let miner = |account| MinerContext {
        account,
        hash_power: 0.5,
    };
    let w1c = build_pow_block(&charlie, &g, &miner(CHARLIE), t0, Vec::new(), Provenance::Honest).expect("stored");
    charlie.import(w1c.clone(), t_x).expect("valid");
    let w1d = match &s1b {
        Some(s1b) => {
            let b = build_pow_block(&david, &s1b.id, &miner(DAVID), t_b + 1.0, Vec::new(), Provenance::Adversarial)
                .expect("stored");
            david.import(b.clone(), t_x).expect("David accepts future blocks");
            david.import(w1c.clone(), t_x).expect("valid");
            // Charlie lacks B_s1b, so David's block cannot attach for him.
            let _ = charlie.import(b.clone(), t_x);
            events.push(GameEvent {
                time: t_x,
                description: format!("Charlie mines B_w1c stamped {t0} on B_0; David mines B_w1d stamped {} on B_s1b", t_b + 1.0),
            });
            Some(b)
        }
        None => {
            // David mines on the highest block he sees, which is Charlie's.
            david.import(w1c.clone(), t_x).expect("valid");
            events.push(GameEvent {
                time: t_x,
                description: "Charlie mines B_w1c on B_0; David adopts it".into(),
            });
            None
        }
    };
    views_agree.push(charlie.canonical_tip() == david.canonical_tip());

    let b0 = term("B_0", &s.genesis);
    let mut chain_d = vec![b0.clone()];
    if let (Some(s1b), Some(w1d)) = (&s1b, &w1d) {
        chain_d.push(term("B_s1b", s1b));
        chain_d.push(term("B_w1d", w1d));
    }
    let chain_c = vec![b0.clone(), term("B_w1c", &w1c)];
    let tip_d = w1d.as_ref().map_or(w1c.id, |b| b.id);
    let at_tx = WeightAccounting::new(t_x, chain_c.clone(), chain_d.clone(), &david, (w1c.id, tip_d));

    // EVENT 2
    let alice = StakerContext::new(s.keys[&ALICE].clone());
    let ticket = pos_ticket(&charlie, &w1c.id, &alice, &s.oracle, &s.ledger)
        .expect("stored")
        .expect("positive stake");
    let s1a = forge_pos_block(&w1c, &ticket, t_a, Vec::new(), Provenance::Honest).expect("eligible at t_a");
    charlie.import_checked(s1a.clone(), t_a, &check).expect("valid");
    david.import_checked(s1a.clone(), t_a, &check).expect("valid");
    let s1a_on_w1d_error = w1d.as_ref().map(|w1d| {
        let moved = Block::seal(BlockTemplate {
            parent: w1d.id,
            kind: BlockKind::Pos,
            difficulty: s1a.difficulty,
            timestamp: s1a.timestamp,
            height: w1d.height + 1,
            producer: ALICE,
            seed: s1a.seed,
            txs: Vec::new(),
            provenance: Provenance::Honest,
        });
        match david.clone().import_checked(moved, t_a, &check) {
            Err(e) => e.to_string(),
            Ok(r) => format!("unexpectedly accepted: {r:?}"),
        }
    });
    events.push(GameEvent {
        time: t_a,
        description: format!("Alice publishes B_s1a stamped {t_a} on B_w1c"),
    });
    views_agree.push(charlie.canonical_tip() == david.canonical_tip());

    let mut chain_c = chain_c;
    chain_c.push(term("B_s1a", &s1a));
    let at_ta = WeightAccounting::new(t_a, chain_c, chain_d, &david, (s1a.id, tip_d));

    Ok(FutureGameTranscript {
        config: *cfg,
        seed: s.seed,
        t0,
        t_x,
        t_a,
        t_b,
        events,
        charlie_rejected_future,
        s1a_on_w1d_error: s1a_on_w1d_error.filter(|e| !e.starts_with("unexpectedly")),
        s1a_parent_is_w1c: s1a.parent == w1c.id,
        at_tx,
        at_ta,
        views_agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_accounting_reproduced() {
        let t = run_future_mining_game(&FutureGameConfig::default()).unwrap();
        assert!(t.charlie_rejected_future);
        assert!(t.t_x < t.t_a && t.t_x < t.t_b);
        assert!(t.at_tx.sum_d > t.at_tx.sum_c);
        assert_eq!(t.at_tx.sum_d - t.at_tx.sum_c, t.itemized_gap_at_tx());
        // the gap is Bob's PoS block alone: both PoW blocks weigh d_w
        assert_eq!(t.itemized_gap_at_tx(), 20.0);
        assert_eq!(t.at_ta.sum_c, t.at_ta.sum_d);
        assert_eq!(t.at_ta.product_c, t.at_ta.product_d);
        assert!(t.s1a_parent_is_w1c);
        assert!(t.s1a_on_w1d_error.as_deref().unwrap().contains("seed"), "{:?}", t.s1a_on_w1d_error);
        assert!(t.matches_expected_accounting());
        assert_eq!(t.views_agree, vec![false, false, false]);
    }

    #[test]
    fn without_bob_views_never_diverge() {
        let t = run_future_mining_game(&FutureGameConfig {
            bob_present: false,
            ..FutureGameConfig::default()
        })
        .unwrap();
        assert_eq!(t.views_agree, vec![true, true, true]);
        assert!(t.matches_expected_accounting());
    }

    #[test]
    fn several_seeds_agree() {
        for seed in 0..20 {
            let t = run_future_mining_game(&FutureGameConfig {
                seed: seed * 1000,
                ..FutureGameConfig::default()
            })
            .unwrap();
            assert!(t.matches_expected_accounting(), "seed {seed}: {t:?}");
        }
    }
}
