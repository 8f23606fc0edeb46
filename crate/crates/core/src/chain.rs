//! Blocks, the block tree, and the product fork-choice rule.
//!
//! Every stored block caches the cumulative `(td_w, td_s)` of the chain ending
//! at it. The canonical tip is the tip with the largest `td_w * td_s`; ties go
//! to the block that arrived first. Side branches are never pruned.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{AccountId, Digest};
use crate::difficulty::{DifficultyRule, KindHistory, KindSample};
use crate::dump::{DumpRecord, TreeDump};
use crate::ledger::Transaction;

pub type BlockId = Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    Genesis,
    #[serde(rename = "PoW")]
    Pow,
    #[serde(rename = "PoS")]
    Pos,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Genesis => "Genesis",
            BlockKind::Pow => "PoW",
            BlockKind::Pos => "PoS",
        })
    }
}

/// Who produced a block. Adversarial blocks come from attack strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Provenance {
    #[default]
    Honest,
    Adversarial,
}

/// Everything a producer chooses; sealing derives the roots and the id.
#[derive(Debug, Clone)]
pub struct BlockTemplate {
    pub parent: BlockId,
    pub kind: BlockKind,
    pub difficulty: f64,
    pub timestamp: f64,
    pub height: u64,
    pub producer: AccountId,
    pub seed: Option<Digest>,
    pub txs: Vec<Transaction>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub id: BlockId,
    pub parent: BlockId,
    pub kind: BlockKind,
    pub difficulty: f64,
    pub timestamp: f64,
    pub height: u64,
    pub producer: AccountId,
    pub seed: Option<Digest>,
    pub state_root: Digest,
    pub tx_root: Digest,
    pub txs: Vec<Transaction>,
    pub provenance: Provenance,
}

impl Block {
    pub fn seal(t: BlockTemplate) -> Block {
        let tx_root = tx_root(&t.txs);
        let mut pre = Vec::with_capacity(32 * 4);
        pre.extend_from_slice(b"state");
        pre.extend_from_slice(t.parent.as_bytes());
        pre.extend_from_slice(tx_root.as_bytes());
        let state_root = Digest::of(&pre);

        pre.clear();
        pre.extend_from_slice(t.parent.as_bytes());
        pre.push(t.kind as u8);
        pre.extend_from_slice(&t.difficulty.to_bits().to_le_bytes());
        pre.extend_from_slice(&t.timestamp.to_bits().to_le_bytes());
        pre.extend_from_slice(&t.height.to_le_bytes());
        pre.extend_from_slice(&t.producer.0.to_le_bytes());
        if let Some(seed) = &t.seed {
            pre.extend_from_slice(seed.as_bytes());
        }
        pre.extend_from_slice(state_root.as_bytes());
        pre.extend_from_slice(tx_root.as_bytes());
        Block {
            id: Digest::of(&pre),
            parent: t.parent,
            kind: t.kind,
            difficulty: t.difficulty,
            timestamp: t.timestamp,
            height: t.height,
            producer: t.producer,
            seed: t.seed,
            state_root,
            tx_root,
            txs: t.txs,
            provenance: t.provenance,
        }
    }

    /// Height-0 block. It roots every seed chain with `seed`.
    pub fn genesis(seed: Digest, timestamp: f64) -> Block {
        Block::seal(BlockTemplate {
            parent: Digest::ZERO,
            kind: BlockKind::Genesis,
            difficulty: 1.0,
            timestamp,
            height: 0,
            producer: AccountId(0),
            seed: Some(seed),
            txs: Vec::new(),
            provenance: Provenance::Honest,
        })
    }
}

fn tx_root(txs: &[Transaction]) -> Digest {
    let mut pre = Vec::with_capacity(8 + txs.len() * 25);
    pre.extend_from_slice(b"txs");
    for tx in txs {
        tx.encode_into(&mut pre);
    }
    Digest::of(&pre)
}

/// Cumulative mining and staking difficulty of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub td_w: f64,
    pub td_s: f64,
}

impl WeightPair {
    pub const fn new(td_w: f64, td_s: f64) -> Self {
        WeightPair { td_w, td_s }
    }

    /// The fork-choice weight `td_w * td_s`.
    pub fn product(&self) -> f64 {
        self.td_w * self.td_s
    }

    pub fn extended_by(&self, kind: BlockKind, difficulty: f64) -> WeightPair {
        match kind {
            BlockKind::Pow => WeightPair::new(self.td_w + difficulty, self.td_s),
            BlockKind::Pos => WeightPair::new(self.td_w, self.td_s + difficulty),
            BlockKind::Genesis => *self,
        }
    }
}

/// Validation constants for a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRules {
    pub difficulty: DifficultyRule,
    /// Maximum tolerated lead of a block timestamp over the local clock.
    pub t_future: f64,
    /// When false, future-dated blocks are accepted (a deviant node).
    pub enforce_future: bool,
    pub genesis_weight: WeightPair,
}

impl ChainRules {
    pub fn new(difficulty: DifficultyRule, t_future: f64) -> Self {
        ChainRules {
            difficulty,
            t_future,
            enforce_future: true,
            genesis_weight: WeightPair::new(1.0, 1.0),
        }
    }
}

/// Extra, protocol-specific validation run after the structural checks.
pub trait BlockCheck {
    fn check(&self, tree: &BlockTree, parent: &TreeEntry, block: &Block) -> Result<(), String>;
}

/// Accepts everything the structural checks accept.
pub struct NoExtraChecks;

impl BlockCheck for NoExtraChecks {
    fn check(&self, _: &BlockTree, _: &TreeEntry, _: &Block) -> Result<(), String> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImportResult {
    /// Block extends the previous canonical tip and is now canonical.
    ExtendedCanonical,
    /// Stored on a branch that is not canonical.
    SideChain,
    /// Canonical tip moved to a different branch.
    Reorg { old_tip: BlockId, new_tip: BlockId },
    /// Already stored; nothing changed.
    Duplicate,
}

impl ImportResult {
    pub fn changed_tip(&self) -> bool {
        matches!(self, ImportResult::ExtendedCanonical | ImportResult::Reorg { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvalidBlock {
    #[error("unknown parent {0:?}")]
    UnknownParent(BlockId),
    #[error("difficulty must be positive and finite, got {0}")]
    NonPositiveDifficulty(f64),
    #[error("expected difficulty {expected}, block carries {found}")]
    WrongDifficulty { expected: f64, found: f64 },
    #[error("seed must be present exactly on PoS blocks")]
    SeedPresence,
    #[error("height {found} does not follow parent height {parent}")]
    BadHeight { parent: u64, found: u64 },
    #[error("a second genesis cannot be imported")]
    Genesis,
    #[error("{0}")]
    Rule(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImportError {
    #[error("timestamp {timestamp} exceeds local clock bound {limit}")]
    Future { timestamp: f64, limit: f64 },
    #[error("invalid block: {0}")]
    Invalid(#[from] InvalidBlock),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("unknown block {0:?}")]
    UnknownBlock(BlockId),
}

/// A stored block plus its cached chain data.
#[derive(Debug, Clone)]
pub struct TreeEntry {
    pub block: Arc<Block>,
    pub weight: WeightPair,
    pub arrival: u64,
    last_pow: Option<BlockId>,
    last_pos: Option<BlockId>,
}

impl TreeEntry {
    /// Latest block of `kind` on the chain ending here, inclusive.
    pub fn last_of_kind(&self, kind: BlockKind) -> Option<BlockId> {
        match kind {
            BlockKind::Pow => self.last_pow,
            BlockKind::Pos => self.last_pos,
            BlockKind::Genesis => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockTree {
    nodes: HashMap<BlockId, TreeEntry>,
    tips: HashSet<BlockId>,
    canonical: BlockId,
    genesis: BlockId,
    next_arrival: u64,
    rules: ChainRules,
}

impl BlockTree {
    pub fn new(genesis: Block, rules: ChainRules) -> Self {
        let id = genesis.id;
        let entry = TreeEntry {
            block: Arc::new(genesis),
            weight: rules.genesis_weight,
            arrival: 0,
            last_pow: None,
            last_pos: None,
        };
        let mut nodes = HashMap::new();
        nodes.insert(id, entry);
        BlockTree {
            nodes,
            tips: HashSet::from([id]),
            canonical: id,
            genesis: id,
            next_arrival: 1,
            rules,
        }
    }

    pub fn rules(&self) -> &ChainRules {
        &self.rules
    }

    /// Turns the future-timestamp check on or off for this node.
    pub fn set_enforce_future(&mut self, enforce: bool) {
        self.rules.enforce_future = enforce;
    }

    pub fn genesis_id(&self) -> BlockId {
        self.genesis
    }

    pub fn canonical_tip(&self) -> BlockId {
        self.canonical
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn entry(&self, id: &BlockId) -> Option<&TreeEntry> {
        self.nodes.get(id)
    }

    pub fn block(&self, id: &BlockId) -> Option<&Arc<Block>> {
        self.nodes.get(id).map(|e| &e.block)
    }

    pub fn tips(&self) -> impl Iterator<Item = &BlockId> {
        self.tips.iter()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TreeEntry> {
        self.nodes.values()
    }

    /// Cached weight pair and product of the chain ending at `tip`.
    pub fn chain_weight(&self, tip: &BlockId) -> Result<(WeightPair, f64), ChainError> {
        let e = self.nodes.get(tip).ok_or(ChainError::UnknownBlock(*tip))?;
        Ok((e.weight, e.weight.product()))
    }

    /// Weight of the chain ending at `tip`, recomputed by walking to genesis.
    pub fn recompute_weight(&self, tip: &BlockId) -> Result<WeightPair, ChainError> {
        let mut blocks = Vec::new();
        let mut cur = self.nodes.get(tip).ok_or(ChainError::UnknownBlock(*tip))?;
        while cur.block.kind != BlockKind::Genesis {
            blocks.push(cur.block.clone());
            cur = &self.nodes[&cur.block.parent];
        }
        // Summed oldest-first, matching the incremental order.
        Ok(blocks
            .iter()
            .rev()
            .fold(self.rules.genesis_weight, |w, b| w.extended_by(b.kind, b.difficulty)))
    }

    /// Argmax of the weight product over all tips; ties go to the earliest arrival.
    pub fn fork_choice(&self) -> BlockId {
        let mut best: Option<&TreeEntry> = None;
        for id in &self.tips {
            let e = &self.nodes[id];
            best = match best {
                None => Some(e),
                Some(b) => {
                    let (pe, pb) = (e.weight.product(), b.weight.product());
                    if pe > pb || (pe == pb && e.arrival < b.arrival) {
                        Some(e)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.map(|e| e.block.id).unwrap_or(self.genesis)
    }

    /// Same-kind history the difficulty controller sees when extending `parent`.
    pub fn kind_history(&self, parent: &BlockId, kind: BlockKind) -> KindHistory {
        let sample = |id: &BlockId| {
            let b = &self.nodes[id].block;
            KindSample {
                difficulty: b.difficulty,
                timestamp: b.timestamp,
            }
        };
        let Some(entry) = self.nodes.get(parent) else {
            return KindHistory::default();
        };
        let Some(last) = entry.last_of_kind(kind) else {
            return KindHistory::default();
        };
        let last_block = &self.nodes[&last].block;
        let second = self.nodes[&last_block.parent].last_of_kind(kind);
        KindHistory {
            last: Some(sample(&last)),
            second_last: second.as_ref().map(sample),
        }
    }

    /// Difficulty a `kind` block must carry to extend `parent`.
    pub fn expected_difficulty(&self, parent: &BlockId, kind: BlockKind) -> f64 {
        self.rules.difficulty.expected(&self.kind_history(parent, kind), kind)
    }

    /// Latest PoS block on the chain ending at `id` (inclusive), or genesis.
    pub fn last_pos_block(&self, id: &BlockId) -> Option<&Arc<Block>> {
        let e = self.nodes.get(id)?;
        let at = e.last_pos.unwrap_or(self.genesis);
        Some(&self.nodes[&at].block)
    }

    /// Blocks from genesis to `tip`, oldest first.
    pub fn chain_to(&self, tip: &BlockId) -> Result<Vec<Arc<Block>>, ChainError> {
        let mut cur = self.nodes.get(tip).ok_or(ChainError::UnknownBlock(*tip))?;
        let mut out = Vec::with_capacity(cur.block.height as usize + 1);
        loop {
            out.push(cur.block.clone());
            if cur.block.kind == BlockKind::Genesis {
                break;
            }
            cur = &self.nodes[&cur.block.parent];
        }
        out.reverse();
        Ok(out)
    }

    pub fn canonical_chain(&self) -> Vec<Arc<Block>> {
        self.chain_to(&self.canonical).expect("canonical tip is stored")
    }

    /// Ancestor of `tip` at `height`, if `tip` is at or above it.
    pub fn ancestor_at(&self, tip: &BlockId, height: u64) -> Option<BlockId> {
        let mut cur = self.nodes.get(tip)?;
        if cur.block.height < height {
            return None;
        }
        while cur.block.height > height {
            cur = &self.nodes[&cur.block.parent];
        }
        Some(cur.block.id)
    }

    pub fn import(&mut self, block: impl Into<Arc<Block>>, local_clock: f64) -> Result<ImportResult, ImportError> {
        self.import_checked(block, local_clock, &NoExtraChecks)
    }

    /// Validates and stores `block`, then recomputes the canonical tip.
    pub fn import_checked(
        &mut self,
        block: impl Into<Arc<Block>>,
        local_clock: f64,
        check: &dyn BlockCheck,
    ) -> Result<ImportResult, ImportError> {
        let block = block.into();
        if self.nodes.contains_key(&block.id) {
            return Ok(ImportResult::Duplicate);
        }
        let parent = self
            .nodes
            .get(&block.parent)
            .ok_or(InvalidBlock::UnknownParent(block.parent))?;
        self.validate(parent, &block)?;
        check.check(self, parent, &block).map_err(InvalidBlock::Rule)?;
        if self.rules.enforce_future {
            let limit = local_clock + self.rules.t_future;
            if block.timestamp > limit {
                return Err(ImportError::Future {
                    timestamp: block.timestamp,
                    limit,
                });
            }
        }

        let entry = TreeEntry {
            weight: parent.weight.extended_by(block.kind, block.difficulty),
            arrival: self.next_arrival,
            last_pow: if block.kind == BlockKind::Pow { Some(block.id) } else { parent.last_pow },
            last_pos: if block.kind == BlockKind::Pos { Some(block.id) } else { parent.last_pos },
            block,
        };
        self.next_arrival += 1;
        let id = entry.block.id;
        let parent_id = entry.block.parent;
        let product = entry.weight.product();
        self.nodes.insert(id, entry);
        self.tips.remove(&parent_id);
        self.tips.insert(id);

        // Weights only grow along a branch, so the new block is the only tip
        // whose product changed. Later arrival loses ties.
        let old = self.canonical;
        if product > self.nodes[&old].weight.product() {
            self.canonical = id;
            if parent_id == old {
                Ok(ImportResult::ExtendedCanonical)
            } else {
                Ok(ImportResult::Reorg { old_tip: old, new_tip: id })
            }
        } else {
            Ok(ImportResult::SideChain)
        }
    }

    fn validate(&self, parent: &TreeEntry, block: &Block) -> Result<(), InvalidBlock> {
        if block.kind == BlockKind::Genesis {
            return Err(InvalidBlock::Genesis);
        }
        if !(block.difficulty > 0.0 && block.difficulty.is_finite()) {
            return Err(InvalidBlock::NonPositiveDifficulty(block.difficulty));
        }
        if (block.kind == BlockKind::Pos) != block.seed.is_some() {
            return Err(InvalidBlock::SeedPresence);
        }
        if block.height != parent.block.height + 1 {
            return Err(InvalidBlock::BadHeight {
                parent: parent.block.height,
                found: block.height,
            });
        }
        let expected = self.expected_difficulty(&parent.block.id, block.kind);
        if block.difficulty != expected {
            return Err(InvalidBlock::WrongDifficulty {
                expected,
                found: block.difficulty,
            });
        }
        Ok(())
    }

    /// One record per stored block, in arrival order.
    pub fn dump(&self) -> TreeDump {
        let mut entries: Vec<&TreeEntry> = self.nodes.values().collect();
        entries.sort_by_key(|e| e.arrival);
        TreeDump::new(
            entries
                .into_iter()
                .map(|e| DumpRecord::from_block(&e.block, e.weight))
                .collect(),
        )
    }
}
