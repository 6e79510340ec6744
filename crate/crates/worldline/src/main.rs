use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use worldline::config::{ExperimentConfig, RuntimeSpec, SelectorSpec};
use worldline::sweep::{apply, run_seeds, run_sweep, Axis};
use worldline::table::{emit_table, Format};
use worldline::{ledger, verify};
use worldline_core::selector::PromptMode;
use worldline_core::{summarize, Mode};

#[derive(Parser)]
#[command(name = "worldline", version, about = "Latency-decoupled planner/runtime highway experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// reactive | dual | deterministic (or m1 | m2 | m3).
    #[arg(long)]
    mode: Option<Mode>,
    /// analytical_top | scripted:<top|prefer_stress|safest_qsaf|round_robin_role> | endpoint
    #[arg(long)]
    selector: Option<SelectorSpec>,
    /// rule_based | scripted:cautious | endpoint
    #[arg(long)]
    runtime: Option<RuntimeSpec>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over a seed list and write its ledgers.
    Episode {
        #[command(flatten)]
        common: Common,
        /// Seeds (comma separated); the configured seed bank when omitted.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        /// Coupled horizon in decision steps.
        #[arg(long)]
        horizon: Option<usize>,
        /// Enabled roles, e.g. alpha+beta+gamma.
        #[arg(long)]
        roles: Option<String>,
        /// Shortlist size k.
        #[arg(long)]
        budget: Option<usize>,
        /// Uniform authority threshold for every level.
        #[arg(long)]
        drift: Option<f64>,
        /// Use the balanced prompt block.
        #[arg(long)]
        balance: bool,
    },
    /// Vary one knob across cells on the matched seed bank.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Axis,
        /// Axis values (comma separated); the standard list when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
    /// Print a summary table for a run or sweep directory.
    Table {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: Format,
    },
    /// Recompute every summary under a directory from its ledgers.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = common.mode {
        cfg.run.mode = m;
        if m != Mode::Deterministic && common.selector.is_none() && cfg.selector == SelectorSpec::AnalyticalTop {
            cfg.selector = "scripted:top".parse().map_err(anyhow::Error::msg)?;
        }
    }
    if let Some(s) = common.selector {
        cfg.selector = s;
    }
    if let Some(r) = common.runtime {
        cfg.runtime = r;
    }
    if let Some(o) = &common.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

/// Directories under `root` (including itself) that hold a summary, sorted.
fn run_dirs(root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(ledger::SUMMARY).is_file() {
            found.push(dir.clone());
        }
        for entry in std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            }
        }
    }
    found.sort();
    if found.is_empty() {
        bail!("no {} under {}", ledger::SUMMARY, root.display());
    }
    Ok(found)
}

fn cell_name(root: &Path, dir: &Path) -> String {
    match dir.strip_prefix(root) {
        Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
        _ => dir.file_name().map_or_else(|| ".".to_owned(), |n| n.to_string_lossy().into_owned()),
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Episode {
            common,
            seed,
            horizon,
            roles,
            budget,
            drift,
            balance,
        } => {
            let mut cfg = load(&common)?;
            if let Some(h) = horizon {
                cfg.run = apply(&cfg.run, Axis::Horizon, &h.to_string())?;
            }
            if let Some(r) = roles {
                cfg.run.roles = r.parse().map_err(anyhow::Error::msg)?;
            }
            if let Some(k) = budget {
                cfg.run = apply(&cfg.run, Axis::Budget, &k.to_string())?;
            }
            if let Some(t) = drift {
                cfg.run = apply(&cfg.run, Axis::Drift, &t.to_string())?;
            }
            if balance {
                cfg.run.prompt_mode = PromptMode::Balanced;
            }
            cfg.validate()?;
            let seeds = if seed.is_empty() { cfg.seeds()?.to_vec() } else { seed };
            let records = run_seeds(&cfg, &cfg.run, &seeds)?;
            let summary = summarize(&records)?;
            ledger::write_run(&cfg.output_dir, &cfg, &records, &summary)?;
            print!("{}", emit_table(&[(cfg.run.mode.to_string(), summary)], Format::Markdown));
            log::info!("ledgers written to {}", cfg.output_dir.display());
            Ok(true)
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let values: Vec<String> = if values.is_empty() {
                axis.default_values().iter().map(|v| (*v).to_owned()).collect()
            } else {
                values
            };
            let results = run_sweep(&cfg, axis, &values, Some(&cfg.output_dir))?;
            let mut rows = Vec::new();
            let mut all_ok = true;
            for r in results {
                match r.outcome {
                    Ok((_, s)) => rows.push((r.id, s)),
                    Err(e) => {
                        eprintln!("cell {} failed: {e:#}", r.id);
                        all_ok = false;
                    }
                }
            }
            if !rows.is_empty() {
                print!("{}", emit_table(&rows, Format::Markdown));
            }
            Ok(all_ok)
        }
        Command::Table { input, format } => {
            let mut rows = Vec::new();
            for dir in run_dirs(&input)? {
                rows.push((cell_name(&input, &dir), ledger::read_summary(&dir)?));
            }
            print!("{}", emit_table(&rows, format));
            Ok(true)
        }
        Command::Verify { input } => {
            let mut all_ok = true;
            for dir in run_dirs(&input)? {
                ledger::read_records(&dir)?;
                let report = verify::verify(&dir)?;
                let name = cell_name(&input, &dir);
                if report.ok() {
                    println!("ok    {name}: {} fields recomputed exactly", report.fields_checked);
                } else {
                    all_ok = false;
                    println!("FAIL  {name}");
                    for m in &report.mismatches {
                        println!("      {}: logged {} recomputed {}", m.field, m.logged, m.recomputed);
                    }
                }
            }
            Ok(all_ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
