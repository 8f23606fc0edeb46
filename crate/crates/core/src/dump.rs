//! Line-delimited JSON dump of a block tree.
//!
//! One object per stored block, in arrival order:
//! `{id, parent, kind, difficulty, timestamp, height, producer, td_w, td_s}`.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Block, BlockId, BlockKind, WeightPair};
use crate::crypto::AccountId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub id: BlockId,
    pub parent: BlockId,
    pub kind: BlockKind,
    pub difficulty: f64,
    pub timestamp: f64,
    pub height: u64,
    pub producer: AccountId,
    pub td_w: f64,
    pub td_s: f64,
}

impl DumpRecord {
    pub fn from_block(b: &Block, w: WeightPair) -> Self {
        DumpRecord {
            id: b.id,
            parent: b.parent,
            kind: b.kind,
            difficulty: b.difficulty,
            timestamp: b.timestamp,
            height: b.height,
            producer: b.producer,
            td_w: w.td_w,
            td_s: w.td_s,
        }
    }

    pub fn weight(&self) -> WeightPair {
        WeightPair::new(self.td_w, self.td_s)
    }

    pub fn product(&self) -> f64 {
        self.td_w * self.td_s
    }
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parsed tree dump with an id index.
#[derive(Debug, Clone, Default)]
pub struct TreeDump {
    records: Vec<DumpRecord>,
    index: HashMap<BlockId, usize>,
}

impl TreeDump {
    pub fn new(records: Vec<DumpRecord>) -> Self {
        let index = records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        TreeDump { records, index }
    }

    pub fn records(&self) -> &[DumpRecord] {
        &self.records
    }

    pub fn get(&self, id: &BlockId) -> Option<&DumpRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn parent_of(&self, r: &DumpRecord) -> Option<&DumpRecord> {
        self.get(&r.parent)
    }

    /// Max-product leaf; ties go to the earlier line (arrival order).
    pub fn canonical_tip(&self) -> Option<&DumpRecord> {
        let parents: HashSet<BlockId> = self.records.iter().map(|r| r.parent).collect();
        let mut best: Option<&DumpRecord> = None;
        for r in self.records.iter().filter(|r| !parents.contains(&r.id)) {
            if best.is_none_or(|b| r.product() > b.product()) {
                best = Some(r);
            }
        }
        best
    }

    /// Ids on the chain from the canonical tip back to genesis.
    pub fn canonical_ids(&self) -> HashSet<BlockId> {
        let mut out = HashSet::new();
        let mut cur = self.canonical_tip();
        while let Some(r) = cur {
            out.insert(r.id);
            cur = self.parent_of(r);
        }
        out
    }

    /// Splits stored blocks into (canonical, side) preserving arrival order.
    pub fn partition(&self) -> (Vec<&DumpRecord>, Vec<&DumpRecord>) {
        let canon = self.canonical_ids();
        self.records.iter().partition(|r| canon.contains(&r.id))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, DumpError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line).map_err(|source| DumpError::Parse { line: i + 1, source })?;
            records.push(rec);
        }
        Ok(TreeDump::new(records))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{BlockTemplate, BlockTree, ChainRules, Provenance};
    use crate::crypto::Digest;
    use crate::difficulty::DifficultyRule;

    fn small_tree() -> BlockTree {
        let mut tree = BlockTree::new(
            Block::genesis(Digest::of(b"g"), 0.0),
            ChainRules::new(DifficultyRule::Fixed { pow: 2.0, pos: 3.0 }, 15.0),
        );
        let g = tree.genesis_id();
        let mut tip = g;
        for (i, kind) in [BlockKind::Pow, BlockKind::Pos, BlockKind::Pow].into_iter().enumerate() {
            let b = Block::seal(BlockTemplate {
                parent: tip,
                kind,
                difficulty: tree.expected_difficulty(&tip, kind),
                timestamp: i as f64 + 0.5,
                height: i as u64 + 1,
                producer: AccountId(i as u64 + 1),
                seed: (kind == BlockKind::Pos).then_some(Digest::of(b"s")),
                txs: vec![],
                provenance: Provenance::Honest,
            });
            tip = b.id;
            tree.import(b, 10.0).unwrap();
        }
        // side block off genesis
        let side = Block::seal(BlockTemplate {
            parent: g,
            kind: BlockKind::Pow,
            difficulty: 2.0,
            timestamp: 0.7,
            height: 1,
            producer: AccountId(9),
            seed: None,
            txs: vec![],
            provenance: Provenance::Honest,
        });
        tree.import(side, 10.0).unwrap();
        tree
    }

    #[test]
    fn jsonl_round_trip_and_fields() {
        let tree = small_tree();
        let dump = tree.dump();
        let mut buf = Vec::new();
        dump.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        let keys: Vec<&str> = first.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        for k in ["id", "parent", "kind", "difficulty", "timestamp", "height", "producer", "td_w", "td_s"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(first["kind"], "PoW");
        let back = TreeDump::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back.records(), dump.records());
    }

    #[test]
    fn canonical_tip_matches_tree() {
        let tree = small_tree();
        let dump = tree.dump();
        assert_eq!(dump.canonical_tip().unwrap().id, tree.canonical_tip());
        let (canon, side) = dump.partition();
        assert_eq!(canon.len(), 4);
        assert_eq!(side.len(), 1);
    }

    #[test]
    fn parse_error_names_line() {
        let err = TreeDump::read_jsonl(&b"{}\n"[..]).unwrap_err();
        assert!(err.to_string().starts_with("line 1"));
    }
}
