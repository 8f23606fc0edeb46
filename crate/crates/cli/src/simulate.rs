use std::io::Write;
use std::path::PathBuf;

use unity_core::sim::{self, Class, Latency, ReportSummary, SimConfig, SimReport, SlashingMode};
use unity_core::stats::mean;

use crate::error::CliError;
use crate::output::{read_to_string, OutDir};

pub struct Args {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub force: bool,
    pub latency: Option<Latency>,
    pub slashing: Option<SlashingMode>,
}

pub const ARTIFACTS: &[&str] = &[
    "report.json",
    "interarrivals.csv",
    "interarrival_hist.csv",
    "rewards.csv",
    "difficulty.csv",
    "blocks_per_second.csv",
    "blocks.jsonl",
    "evidence.json",
];

pub fn load_config(path: &std::path::Path) -> Result<SimConfig, CliError> {
    SimConfig::parse(&read_to_string(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.rng_seed = s;
    }
    if let Some(l) = args.latency {
        cfg.latency = l;
    }
    if let Some(s) = args.slashing {
        cfg.slashing = s;
    }
    let out = OutDir::prepare(&args.out, args.force, ARTIFACTS)?;
    let report = sim::run(&cfg).map_err(CliError::config)?;
    write_artifacts(&out, &report)?;
    print_summary(&report.summary());
    Ok(())
}

fn write_artifacts(out: &OutDir, r: &SimReport) -> Result<(), CliError> {
    out.write("report.json", |w| r.write_report_json(w))?;
    out.write("interarrivals.csv", |w| r.write_interarrivals_csv(w))?;
    out.write("interarrival_hist.csv", |w| write_histogram(w, r))?;
    out.write("rewards.csv", |w| r.write_rewards_csv(w))?;
    out.write("difficulty.csv", |w| r.write_difficulty_csv(w))?;
    out.write("blocks_per_second.csv", |w| r.write_blocks_per_second_csv(w))?;
    out.write("blocks.jsonl", |w| r.dump.write_jsonl(w))?;
    out.write_json("evidence.json", &r.evidence)
}

/// `class,bin_start,bin_end,count,expected`: one-second bins with the count an
/// exponential of the same mean would put in each.
fn write_histogram(w: &mut dyn Write, r: &SimReport) -> std::io::Result<()> {
    writeln!(w, "class,bin_start,bin_end,count,expected")?;
    for c in [Class::All, Class::Pos, Class::Pow] {
        let gaps = r.interarrivals(c);
        if gaps.is_empty() {
            continue;
        }
        let rate = 1.0 / mean(gaps);
        let bins = unity_core::stats::integer_histogram(gaps.iter().copied());
        let n = gaps.len() as f64;
        for (i, count) in bins.iter().enumerate() {
            let lo = i as f64;
            let expected = n * ((-rate * lo).exp() - (-rate * (lo + 1.0)).exp());
            writeln!(w, "{},{},{},{},{:.3}", c.name(), i, i + 1, count, expected)?;
        }
    }
    Ok(())
}

fn print_summary(s: &ReportSummary) {
    println!(
        "blocks: {} canonical ({} PoS, {} PoW), {} stored, {} orphaned",
        s.total_blocks, s.pos_blocks, s.pow_blocks, s.stored_blocks, s.orphan_count
    );
    for (class, stats) in &s.interarrivals {
        if let Some(c) = stats {
            println!(
                "  {class:<4} mean {:.3} s  std {:.3} s  KS {:.5} (critical {:.5})",
                c.mean, c.std, c.ks_statistic, c.ks_critical
            );
        }
    }
    println!("orphan proxy: {:.3}%", s.orphan_proxy * 100.0);
    if let Some(d) = &s.difficulty {
        println!(
            "difficulty: mean d_s/d_w {:.3}, d_w/(r*2t) in [{:.3}, {:.3}]",
            d.ratio_time_avg, d.pow_norm_min, d.pow_norm_max
        );
    }
    for (class, p) in &s.proportionality {
        if let Some(p) = p {
            println!("proportionality {class}: {p:.4}");
        }
    }
    println!("slashing evidence: {}", s.evidence_count);
}
