use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use unity_core::chain::BlockKind;
use unity_core::dump::{DumpError, TreeDump};
use unity_core::sim::{summarize_class, ClassStats};
use unity_core::slashing::detect_all;
use unity_core::stats::integer_histogram;

use crate::error::CliError;

#[derive(Debug, Serialize)]
struct DumpStats {
    stored_blocks: usize,
    canonical_blocks: usize,
    canonical_pos: usize,
    canonical_pow: usize,
    side_blocks: usize,
    tip_height: u64,
    tip_td_w: f64,
    tip_td_s: f64,
    /// Statistics below cover canonical blocks from here on.
    warmup_end: f64,
    /// Canonical blocks sharing an integer second with an earlier one.
    same_second_fraction: f64,
    interarrival_all: Option<ClassStats>,
    interarrival_pos: Option<ClassStats>,
    interarrival_pow: Option<ClassStats>,
    evidence: usize,
}

/// Gaps between consecutive timestamps, keeping those that start at or after
/// `from`.
fn gaps(ts: &[f64], from: f64) -> Vec<f64> {
    ts.windows(2).filter(|w| w[0] >= from).map(|w| w[1] - w[0]).collect()
}

fn summarize(dump: &TreeDump, warmup_blocks: u64) -> DumpStats {
    let (canon, side) = dump.partition();
    let mut blocks: Vec<_> = canon.into_iter().filter(|r| r.kind != BlockKind::Genesis).collect();
    blocks.sort_by_key(|r| r.height);
    let times = |k: Option<BlockKind>| -> Vec<f64> {
        let mut ts: Vec<f64> = blocks
            .iter()
            .filter(|r| k.is_none_or(|k| r.kind == k))
            .map(|r| r.timestamp)
            .collect();
        ts.sort_by(f64::total_cmp);
        ts
    };
    let (pos, pow) = (times(Some(BlockKind::Pos)), times(Some(BlockKind::Pow)));
    // Later of the n-th block of each kind, as in report.json.
    let warmup_end = match warmup_blocks as usize {
        0 => 0.0,
        n => {
            let nth = |ts: &[f64]| ts.get(n - 1).copied().unwrap_or(f64::INFINITY);
            nth(&pos).max(nth(&pow))
        }
    };
    let all = times(None);
    let counted: Vec<f64> = all.iter().copied().filter(|&t| t >= warmup_end).collect();
    let start = warmup_end.floor();
    let per_second = integer_histogram(counted.iter().map(|t| t - start));
    let extra: u64 = per_second.iter().map(|c| c.saturating_sub(1)).sum();
    let tip = dump.canonical_tip();
    DumpStats {
        stored_blocks: dump.records().len(),
        canonical_blocks: blocks.len(),
        canonical_pos: blocks.iter().filter(|r| r.kind == BlockKind::Pos).count(),
        canonical_pow: blocks.iter().filter(|r| r.kind == BlockKind::Pow).count(),
        side_blocks: side.len(),
        tip_height: tip.map_or(0, |t| t.height),
        tip_td_w: tip.map_or(0.0, |t| t.td_w),
        tip_td_s: tip.map_or(0.0, |t| t.td_s),
        warmup_end,
        same_second_fraction: if counted.is_empty() { 0.0 } else { extra as f64 / counted.len() as f64 },
        interarrival_all: summarize_class(&gaps(&all, warmup_end)).ok(),
        interarrival_pos: summarize_class(&gaps(&pos, warmup_end)).ok(),
        interarrival_pow: summarize_class(&gaps(&pow, warmup_end)).ok(),
        evidence: detect_all(dump).len(),
    }
}

pub fn run(path: &Path, warmup_blocks: u64) -> Result<(), CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let dump = TreeDump::read_jsonl(BufReader::new(file)).map_err(|e| match e {
        DumpError::Io(e) => CliError::io(path, e),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })?;
    let s = summarize(&dump, warmup_blocks);
    let text = serde_json::to_string_pretty(&s).expect("plain data serializes");
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = writeln!(io::stdout().lock(), "{text}");
    Ok(())
}
