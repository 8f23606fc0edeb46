//! Property tests for the chain, ledger, difficulty and hash oracle.

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unity_core::chain::{Block, BlockId, BlockKind, BlockTemplate, BlockTree, ChainRules, ImportResult, Provenance};
use unity_core::crypto::{sign_seed, AccountId, Digest, Oracle};
use unity_core::difficulty::{adjust, DifficultyParams, DifficultyRule};
use unity_core::ledger::Ledger;
use unity_core::stats::{ks_critical_one, ks_statistic};

fn rules() -> ChainRules {
    ChainRules::new(DifficultyRule::Adaptive(DifficultyParams::for_block_time(10.0, 0.01)), 15.0)
}

/// One step of a random tree: extend the `pick`-th stored block (mod count)
/// with a block of `pos` kind, `dt` seconds after its parent.
type Step = (usize, bool, f64);

fn steps() -> impl Strategy<Value = Vec<Step>> {
    proptest::collection::vec((any::<usize>(), any::<bool>(), 0.1f64..60.0), 1..80)
}

/// Builds the blocks in creation order, which is topological.
fn build(steps: &[Step]) -> (Block, Vec<Block>) {
    let genesis = Block::genesis(Digest::of(b"genesis"), 0.0);
    let mut tree = BlockTree::new(genesis.clone(), rules());
    let mut stored = vec![genesis.clone()];
    let mut out = Vec::new();
    for (i, &(pick, pos, dt)) in steps.iter().enumerate() {
        let parent = stored[pick % stored.len()].clone();
        let kind = if pos { BlockKind::Pos } else { BlockKind::Pow };
        let b = Block::seal(BlockTemplate {
            parent: parent.id,
            kind,
            difficulty: tree.expected_difficulty(&parent.id, kind),
            timestamp: parent.timestamp + dt,
            height: parent.height + 1,
            producer: AccountId(i as u64 + 1),
            seed: pos.then(|| Digest::of(&i.to_le_bytes())),
            txs: Vec::new(),
            provenance: Provenance::Honest,
        });
        tree.import(b.clone(), f64::INFINITY).expect("built to be valid");
        stored.push(b.clone());
        out.push(b);
    }
    (genesis, out)
}

/// Weights summed along parent links, independent of the tree's cache.
fn oracle_weights(blocks: &[Block], genesis: &Block) -> HashMap<BlockId, (f64, f64)> {
    let mut w = HashMap::from([(genesis.id, (1.0, 1.0))]);
    for b in blocks {
        let (tw, ts) = w[&b.parent];
        let next = match b.kind {
            BlockKind::Pow => (tw + b.difficulty, ts),
            _ => (tw, ts + b.difficulty),
        };
        w.insert(b.id, next);
    }
    w
}

/// Heaviest leaf, earliest arrival on exact ties.
fn oracle_tip(order: &[Block], genesis: &Block, w: &HashMap<BlockId, (f64, f64)>) -> (BlockId, bool) {
    let parents: HashSet<BlockId> = order.iter().map(|b| b.parent).collect();
    let mut best = (genesis.id, 1.0);
    let mut tied = false;
    for b in order.iter().filter(|b| !parents.contains(&b.id)) {
        let p = w[&b.id].0 * w[&b.id].1;
        if p > best.1 {
            best = (b.id, p);
            tied = false;
        } else if p == best.1 {
            tied = true;
        }
    }
    (best.0, tied)
}

fn replay(genesis: &Block, order: &[Block]) -> (BlockTree, Vec<ImportResult>) {
    let mut tree = BlockTree::new(genesis.clone(), rules());
    let results = order
        .iter()
        .map(|b| tree.import(b.clone(), f64::INFINITY).expect("valid in any topological order"))
        .collect();
    (tree, results)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cached_weight_is_sum_along_path(s in steps()) {
        let (genesis, blocks) = build(&s);
        let w = oracle_weights(&blocks, &genesis);
        let (tree, _) = replay(&genesis, &blocks);
        for b in &blocks {
            let e = tree.entry(&b.id).unwrap();
            prop_assert_eq!((e.weight.td_w, e.weight.td_s), w[&b.id]);
            prop_assert_eq!(tree.recompute_weight(&b.id).unwrap(), e.weight);
        }
    }

    #[test]
    fn canonical_tip_is_heaviest_leaf(s in steps()) {
        let (genesis, blocks) = build(&s);
        let w = oracle_weights(&blocks, &genesis);
        let (tree, _) = replay(&genesis, &blocks);
        let (tip, _) = oracle_tip(&blocks, &genesis, &w);
        prop_assert_eq!(tree.canonical_tip(), tip);
        prop_assert_eq!(tree.fork_choice(), tip);
    }

    #[test]
    fn import_results_describe_tip_moves(s in steps()) {
        let (genesis, blocks) = build(&s);
        let mut tree = BlockTree::new(genesis.clone(), rules());
        for b in &blocks {
            let before = tree.canonical_tip();
            let r = tree.import(b.clone(), f64::INFINITY).unwrap();
            let after = tree.canonical_tip();
            match r {
                ImportResult::ExtendedCanonical => {
                    prop_assert_eq!(after, b.id);
                    prop_assert_eq!(b.parent, before);
                }
                ImportResult::Reorg { old_tip, new_tip } => {
                    prop_assert_eq!((old_tip, new_tip), (before, b.id));
                    prop_assert_ne!(b.parent, before);
                }
                ImportResult::SideChain => prop_assert_eq!(after, before),
                ImportResult::Duplicate => prop_assert!(false, "fresh block reported duplicate"),
            }
            prop_assert_eq!(tree.import(b.clone(), f64::INFINITY).unwrap(), ImportResult::Duplicate);
        }
    }

    #[test]
    fn fork_choice_ignores_arrival_order(s in steps(), shuffle_seed in any::<u64>()) {
        let (genesis, blocks) = build(&s);
        let w = oracle_weights(&blocks, &genesis);
        let (_, tied) = oracle_tip(&blocks, &genesis, &w);
        prop_assume!(!tied);
        let mut order = blocks.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        order.sort_by_key(|b| b.height);
        let (a, _) = replay(&genesis, &blocks);
        let (b, _) = replay(&genesis, &order);
        prop_assert_eq!(a.canonical_tip(), b.canonical_tip());
        prop_assert_eq!(a.len(), b.len());
    }

    #[test]
    fn later_arrival_loses_exact_ties(dt in 1.0f64..50.0) {
        // Two PoW children of genesis carry the same difficulty, so their
        // products tie; whichever is imported first stays canonical.
        let genesis = Block::genesis(Digest::of(b"g"), 0.0);
        let child = |p: u64| Block::seal(BlockTemplate {
            parent: genesis.id,
            kind: BlockKind::Pow,
            difficulty: 1.0,
            timestamp: dt,
            height: 1,
            producer: AccountId(p),
            seed: None,
            txs: Vec::new(),
            provenance: Provenance::Honest,
        });
        let (x, y) = (child(1), child(2));
        let (t1, _) = replay(&genesis, &[x.clone(), y.clone()]);
        let (t2, _) = replay(&genesis, &[y.clone(), x.clone()]);
        prop_assert_eq!(t1.canonical_tip(), x.id);
        prop_assert_eq!(t2.canonical_tip(), y.id);
    }

    #[test]
    fn difficulty_stays_on_lattice(gaps in proptest::collection::vec(0.0f64..100.0, 1..300)) {
        let params = DifficultyParams::for_block_time(10.0, 0.01);
        let mut d = 1.0;
        for g in gaps {
            d = adjust(d, g, &params);
            let k = d.ln() / 1.01f64.ln();
            prop_assert!((k - k.round()).abs() < 1e-6, "{} is not a power of 1.01", d);
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Credit(u8, u64),
    Lock(u8, u64),
    Unlock(u8, u64),
    Transfer(u8, u8, u64),
    Slash(u8, u64),
    Advance(u64),
}

fn op() -> impl Strategy<Value = Op> {
    let acct = 0u8..5;
    let amt = 0u64..500;
    prop_oneof![
        (acct.clone(), amt.clone()).prop_map(|(a, x)| Op::Credit(a, x)),
        (acct.clone(), amt.clone()).prop_map(|(a, x)| Op::Lock(a, x)),
        (acct.clone(), amt.clone()).prop_map(|(a, x)| Op::Unlock(a, x)),
        (acct.clone(), acct.clone(), amt.clone()).prop_map(|(a, b, x)| Op::Transfer(a, b, x)),
        (acct, amt).prop_map(|(a, x)| Op::Slash(a, x)),
        (0u64..30).prop_map(Op::Advance),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ledger_conserves_supply(ops in proptest::collection::vec(op(), 1..150), t in 1u64..20, w in 1u64..20) {
        let mut ledger = Ledger::new(t, w).unwrap();
        let id = |a: u8| AccountId(a as u64);
        let mut height = 0;
        let mut minted = 0u64;
        let mut slashed = 0u64;
        for op in ops {
            let before = ledger.clone();
            let ok = match op {
                Op::Credit(a, x) => { ledger.credit(id(a), x); minted += x; true }
                Op::Lock(a, x) => ledger.lock(id(a), x, height).is_ok(),
                Op::Unlock(a, x) => ledger.unlock(id(a), x, height).is_ok(),
                Op::Transfer(a, b, x) => ledger.transfer(id(a), id(b), x, height).is_ok(),
                Op::Slash(a, x) => {
                    let taken = ledger.slash(id(a), x, height);
                    prop_assert!(taken <= x);
                    slashed += taken;
                    true
                }
                Op::Advance(n) => { height += n; true }
            };
            if !ok {
                // A rejected operation leaves the supply alone.
                prop_assert_eq!(ledger.total_supply(), before.total_supply());
            }
            prop_assert_eq!(ledger.total_supply(), minted - slashed);
            for a in 0..5 {
                let (vp, liq) = (ledger.voting_power(id(a), height), ledger.liquid_at(id(a), height));
                let total = ledger.account(id(a)).map_or(0, |x| x.total());
                prop_assert!(vp + liq <= total);
            }
        }
    }

    #[test]
    fn locked_stake_votes_exactly_after_maturation(x in 1u64..1000, t in 1u64..50, h0 in 0u64..100) {
        let mut ledger = Ledger::new(t, 7).unwrap();
        let a = AccountId(1);
        ledger.credit(a, x);
        ledger.lock(a, x, h0).unwrap();
        prop_assert_eq!(ledger.voting_power(a, h0 + t - 1), 0);
        prop_assert_eq!(ledger.voting_power(a, h0 + t), x);
    }
}

#[test]
fn digest_units_are_uniform() {
    let n = 1_000_000u64;
    let units: Vec<f64> = (0..n).map(|i| Digest::of(&i.to_le_bytes()).unit()).collect();
    let d = ks_statistic(&units, |x| x.clamp(0.0, 1.0));
    assert!(d < ks_critical_one(units.len()), "KS {d}");
}

#[test]
fn signed_seed_chain_is_uniform() {
    let oracle = Oracle::new(3);
    let key = oracle.keypair(AccountId(1));
    let mut seed = oracle.genesis_seed();
    let units: Vec<f64> = (0..100_000)
        .map(|_| {
            seed = sign_seed(&seed, &key);
            oracle.hash(seed.as_bytes()).unit()
        })
        .collect();
    let d = ks_statistic(&units, |x| x.clamp(0.0, 1.0));
    assert!(d < ks_critical_one(units.len()), "KS {d}");
}
