//! JSON Lines evidence ledgers for one run directory:
//!
//! | file          | one line per                    |
//! |---------------|---------------------------------|
//! | `e1.jsonl`    | executed decision step          |
//! | `e2.jsonl`    | strategic call or invalidation  |
//! | `e3.jsonl`    | episode (counter snapshot)      |
//! | `summary.json`| cell summary (single object)    |
//! | `config.toml` | effective configuration         |

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use worldline_core::episode::{EpisodeCounters, LedgerEntry, StepRecord};
use worldline_core::{EpisodeRecord, MetricsSummary};

use crate::config::ExperimentConfig;

pub const E1: &str = "e1.jsonl";
pub const E2: &str = "e2.jsonl";
pub const E3: &str = "e3.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const CONFIG: &str = "config.toml";

fn write_lines<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}: schema violation", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

/// Write every ledger for one run. Records are written in seed order.
pub fn write_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    records: &[EpisodeRecord],
    summary: &MetricsSummary,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut sorted: Vec<&EpisodeRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.e3.seed);
    write_lines(&dir.join(E1), sorted.iter().flat_map(|r| r.e1.iter()))?;
    write_lines(&dir.join(E2), sorted.iter().flat_map(|r| r.e2.iter()))?;
    write_lines(&dir.join(E3), sorted.iter().map(|r| &r.e3))?;
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    fs::write(dir.join(SUMMARY), s)?;
    fs::write(dir.join(CONFIG), cfg.to_toml()?)?;
    Ok(())
}

pub fn read_summary(dir: &Path) -> anyhow::Result<MetricsSummary> {
    let path = dir.join(SUMMARY);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn entry_seed(e: &LedgerEntry) -> u64 {
    match e {
        LedgerEntry::Commit(c) => c.seed,
        LedgerEntry::Invalidation(i) => i.seed,
    }
}

/// Reassemble episode records from the three ledgers, checking that every
/// line matches its schema and that the files agree with each other.
pub fn read_records(dir: &Path) -> anyhow::Result<Vec<EpisodeRecord>> {
    let e1: Vec<StepRecord> = read_lines(&dir.join(E1))?;
    let e2: Vec<LedgerEntry> = read_lines(&dir.join(E2))?;
    let e3: Vec<EpisodeCounters> = read_lines(&dir.join(E3))?;

    let mut by_seed: BTreeMap<u64, EpisodeRecord> = BTreeMap::new();
    for c in e3 {
        let seed = c.seed;
        let prev = by_seed.insert(
            seed,
            EpisodeRecord {
                e1: Vec::new(),
                e2: Vec::new(),
                e3: c,
            },
        );
        ensure!(prev.is_none(), "seed {seed} appears twice in {E3}");
    }
    for row in e1 {
        match by_seed.get_mut(&row.seed) {
            Some(r) => r.e1.push(row),
            None => bail!("{E1} row for seed {} has no {E3} entry", row.seed),
        }
    }
    for entry in e2 {
        let seed = entry_seed(&entry);
        match by_seed.get_mut(&seed) {
            Some(r) => r.e2.push(entry),
            None => bail!("{E2} entry for seed {seed} has no {E3} entry"),
        }
    }
    let records: Vec<EpisodeRecord> = by_seed.into_values().collect();
    for r in &records {
        check_record(r)?;
    }
    Ok(records)
}

/// Cross-ledger invariants of one episode.
pub fn check_record(r: &EpisodeRecord) -> anyhow::Result<()> {
    let seed = r.e3.seed;
    let e3 = &r.e3;
    ensure!(e3.steps_executed == r.e1.len(), "seed {seed}: steps_executed disagrees with {E1}");
    ensure!(
        r.e1.iter().enumerate().all(|(i, s)| s.step == i),
        "seed {seed}: {E1} steps are not contiguous from 0"
    );
    ensure!(e3.latencies_dec.len() == r.e1.len(), "seed {seed}: one decision latency per step expected");
    let fallbacks: u64 = e3.parser_fallbacks.values().sum();
    ensure!(
        e3.strict_parses + fallbacks == e3.strategic_calls,
        "seed {seed}: strict parses plus fallbacks do not sum to calls"
    );
    ensure!(
        r.commits().count() as u64 == e3.strategic_calls,
        "seed {seed}: {E2} commit count disagrees with strategic_calls"
    );
    ensure!(
        e3.collided == r.e1.iter().any(|s| s.collision),
        "seed {seed}: collided flag disagrees with {E1}"
    );
    for c in r.commits() {
        if let Some(sel) = &c.selected {
            ensure!(
                c.branches.iter().any(|b| &b.branch_id == sel) && c.shortlist.iter().any(|s| &s.branch_id == sel),
                "seed {seed} step {}: selection {sel} is not in the logged branch set",
                c.step
            );
        }
        ensure!(
            c.selected.is_some() != c.fallback_reason.is_some(),
            "seed {seed} step {}: exactly one of selection and fallback reason expected",
            c.step
        );
    }
    for v in &r.e1 {
        ensure!(
            v.speed_kmh.is_finite() && v.drift.is_finite() && v.latency_dec.is_finite(),
            "seed {seed} step {}: non-finite value",
            v.step
        );
    }
    Ok(())
}
