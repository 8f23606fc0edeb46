//! The discrete-event loop.
//!
//! Every participant is a node. Nodes that share a view see the same block
//! tree; under perfect latency all nodes share one view, otherwise each node
//! has its own and blocks travel between views as `Deliver` events.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{Block, BlockId, BlockTree, ChainRules, ImportError, InvalidBlock, Provenance};
use crate::crypto::Oracle;
use crate::difficulty::DifficultyRule;
use crate::forging::{build_pow_block, forge_pos_block, pos_ticket, pow_solve_time, MinerContext, PosTicket, StakerContext};
use crate::ledger::Ledger;

use super::config::{Latency, SimConfig};

/// Stream offset reserved for latency sampling.
const LATENCY_STREAM: u64 = u64::MAX;

enum EventKind {
    /// Scheduled solve / eligibility for `node`; stale if `gen` is outdated.
    Work { node: usize, gen: u64 },
    Deliver { view: usize, block: Arc<Block> },
    /// A block that was too far in the future is offered again.
    WakeFuture { view: usize, block: Arc<Block> },
    HashChange { factor: f64 },
}

struct Event {
    at: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // BinaryHeap is a max-heap; invert so the earliest (at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

enum Role {
    Miner { ctx: MinerContext, rng: ChaCha8Rng },
    Staker {
        ctx: StakerContext,
        /// Last computed ticket, keyed by the PoS block it extends.
        cache: Option<PosTicket>,
    },
}

struct Node {
    role: Role,
    view: usize,
    gen: u64,
    /// Parent the pending work extends.
    parent: BlockId,
    ticket: Option<PosTicket>,
}

struct View {
    tree: BlockTree,
    nodes: Vec<usize>,
    /// Blocks whose parent has not arrived yet, keyed by that parent.
    orphans: HashMap<BlockId, Vec<Arc<Block>>>,
}

/// Counters collected while the loop runs.
#[derive(Debug, Clone, Default)]
pub(crate) struct RunStats {
    pub produced: u64,
    pub deliveries: u64,
    pub future_rejections: u64,
    pub invalid: u64,
    pub events: u64,
}

pub(crate) struct Engine<'a> {
    cfg: &'a SimConfig,
    oracle: Oracle,
    ledger: Ledger,
    nodes: Vec<Node>,
    views: Vec<View>,
    /// Receives every block at production time; its canonical chain is the
    /// one reported. Under perfect latency this is view 0 itself.
    observer: Option<BlockTree>,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    hash_scale: f64,
    latency_rng: ChaCha8Rng,
    pub stats: RunStats,
}

impl<'a> Engine<'a> {
    pub fn new(cfg: &'a SimConfig) -> Self {
        let oracle = Oracle::new(cfg.rng_seed);
        let genesis = Block::genesis(oracle.genesis_seed(), 0.0);
        let rules = ChainRules::new(DifficultyRule::Adaptive(cfg.difficulty_params()), cfg.t_future);
        let mut ledger = Ledger::new(cfg.maturation, cfg.withdrawal).expect("validated delays");
        for s in &cfg.stakers {
            ledger.credit_active(s.account, s.stake);
        }

        let mut nodes = Vec::new();
        for (i, m) in cfg.miners.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(i as u64 + 1);
            nodes.push(Role::Miner {
                ctx: MinerContext {
                    account: m.account,
                    hash_power: m.hash_power,
                },
                rng,
            });
        }
        for s in &cfg.stakers {
            nodes.push(Role::Staker {
                ctx: StakerContext::new(oracle.keypair(s.account)),
                cache: None,
            });
        }

        let shared = cfg.latency == Latency::Perfect;
        let view_count = if shared { 1 } else { nodes.len() };
        let views: Vec<View> = (0..view_count)
            .map(|v| View {
                tree: BlockTree::new(genesis.clone(), rules),
                nodes: if shared { (0..nodes.len()).collect() } else { vec![v] },
                orphans: HashMap::new(),
            })
            .collect();
        let g = genesis.id;
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, role)| Node {
                role,
                view: if shared { 0 } else { i },
                gen: 0,
                parent: g,
                ticket: None,
            })
            .collect();
        let observer = (!shared).then(|| {
            let mut t = BlockTree::new(genesis, rules);
            t.set_enforce_future(false);
            t
        });
        let mut latency_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        latency_rng.set_stream(LATENCY_STREAM);

        Engine {
            cfg,
            oracle,
            ledger,
            nodes,
            views,
            observer,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            hash_scale: 1.0,
            latency_rng,
            stats: RunStats::default(),
        }
    }

    /// Runs to the configured duration and returns the reporting tree.
    pub fn run(mut self) -> (BlockTree, RunStats) {
        for c in &self.cfg.hash_changes {
            self.push(c.at, EventKind::HashChange { factor: c.factor });
        }
        for n in 0..self.nodes.len() {
            self.schedule(n);
        }
        while let Some(ev) = self.queue.pop() {
            if ev.at > self.cfg.duration {
                break;
            }
            self.now = ev.at;
            self.stats.events += 1;
            match ev.kind {
                EventKind::Work { node, gen } => {
                    if self.nodes[node].gen == gen {
                        self.produce(node);
                    }
                }
                EventKind::Deliver { view, block } | EventKind::WakeFuture { view, block } => {
                    self.stats.deliveries += 1;
                    if self.receive(view, block) {
                        self.reschedule_view(view);
                    }
                }
                EventKind::HashChange { factor } => {
                    self.hash_scale = factor;
                    for n in 0..self.nodes.len() {
                        if matches!(self.nodes[n].role, Role::Miner { .. }) {
                            self.schedule(n);
                        }
                    }
                }
            }
        }
        let tree = match self.observer {
            Some(t) => t,
            None => self.views.swap_remove(0).tree,
        };
        (tree, self.stats)
    }

    fn push(&mut self, at: f64, kind: EventKind) {
        self.queue.push(Event { at, seq: self.seq, kind });
        self.seq += 1;
    }

    /// Restarts `node`'s work on its view's canonical tip.
    fn schedule(&mut self, n: usize) {
        let now = self.now;
        let hash_scale = self.hash_scale;
        let node = &mut self.nodes[n];
        let tree = &self.views[node.view].tree;
        let tip = tree.canonical_tip();
        node.gen += 1;
        node.parent = tip;
        let at = match &mut node.role {
            Role::Miner { ctx, rng } => {
                let d_w = tree.expected_difficulty(&tip, crate::chain::BlockKind::Pow);
                let scaled = MinerContext {
                    hash_power: ctx.hash_power * hash_scale,
                    ..*ctx
                };
                now + pow_solve_time(&scaled, d_w, rng).expect("validated powers")
            }
            Role::Staker { ctx, cache } => {
                let last_pos = tree.last_pos_block(&tip).expect("tip stored").id;
                let ticket = match cache {
                    Some(t) if t.last_pos == last_pos => Some(*t),
                    _ => {
                        let t = pos_ticket(tree, &tip, ctx, &self.oracle, &self.ledger).expect("tip stored");
                        *cache = t;
                        t
                    }
                };
                node.ticket = ticket;
                match ticket {
                    Some(t) => t.eligible_at.max(now),
                    None => return,
                }
            }
        };
        let gen = node.gen;
        self.push(at, EventKind::Work { node: n, gen });
    }

    fn reschedule_view(&mut self, view: usize) {
        for i in 0..self.views[view].nodes.len() {
            let n = self.views[view].nodes[i];
            self.schedule(n);
        }
    }

    fn produce(&mut self, n: usize) {
        let node = &self.nodes[n];
        let view = node.view;
        let tree = &self.views[view].tree;
        let block = match &node.role {
            Role::Miner { ctx, .. } => build_pow_block(tree, &node.parent, ctx, self.now, Vec::new(), Provenance::Honest),
            Role::Staker { .. } => {
                let ticket = node.ticket.expect("scheduled stakers hold a ticket");
                forge_pos_block(
                    tree.block(&node.parent).expect("parent stored"),
                    &ticket,
                    self.now,
                    Vec::new(),
                    Provenance::Honest,
                )
            }
        }
        .expect("honest work is well-formed");
        self.stats.produced += 1;
        let block = Arc::new(block);

        if let Some(obs) = &mut self.observer {
            obs.import(block.clone(), self.now).expect("observer accepts honest blocks");
        }
        for v in 0..self.views.len() {
            if v == view {
                continue;
            }
            let delay = match self.cfg.latency {
                Latency::Perfect => 0.0,
                Latency::Fixed { seconds } => seconds,
                Latency::Uniform { lo, hi } => {
                    if hi > lo {
                        self.latency_rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                }
            };
            self.push(self.now + delay, EventKind::Deliver { view: v, block: block.clone() });
        }
        // The producer's own view sees the block first.
        if self.receive(view, block) {
            self.reschedule_view(view);
        } else {
            // A block on a stale parent leaves the tip unchanged; restart the
            // producer on the current tip.
            self.schedule(n);
        }
    }

    /// Imports `block` into `view`, draining any orphans it unlocks.
    /// Returns whether the view's canonical tip changed.
    fn receive(&mut self, view: usize, block: Arc<Block>) -> bool {
        let mut changed = false;
        let mut pending = vec![block];
        while let Some(b) = pending.pop() {
            let v = &mut self.views[view];
            match v.tree.import(b.clone(), self.now) {
                Ok(r) => {
                    changed |= r.changed_tip();
                    if let Some(children) = v.orphans.remove(&b.id) {
                        pending.extend(children);
                    }
                }
                Err(ImportError::Future { .. }) => {
                    self.stats.future_rejections += 1;
                    // Rounding in `ts - t_future + t_future` must not requeue at `now`.
                    let at = (b.timestamp - self.cfg.t_future).max(self.now.next_up());
                    self.push(at, EventKind::WakeFuture { view, block: b });
                }
                Err(ImportError::Invalid(InvalidBlock::UnknownParent(p))) => {
                    v.orphans.entry(p).or_default().push(b);
                }
                Err(ImportError::Invalid(_)) => self.stats.invalid += 1,
            }
        }
        changed
    }
}
