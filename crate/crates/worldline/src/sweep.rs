//! One-knob sweeps over the matched seed bank. Every cell runs the same seeds;
//! episodes run in parallel and are folded back in seed order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use worldline_core::selector::PromptMode;
use worldline_core::{run_episode, summarize, EpisodeRecord, MetricsSummary, RoleSet, RunConfig};

use crate::config::ExperimentConfig;
use crate::ledger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Horizon,
    Roles,
    Budget,
    Drift,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Horizon => "horizon",
            Axis::Roles => "roles",
            Axis::Budget => "budget",
            Axis::Drift => "drift",
        }
    }

    /// The standard value list for the axis.
    pub fn default_values(self) -> &'static [&'static str] {
        match self {
            Axis::Horizon => &["1", "2", "4", "8", "12"],
            Axis::Roles => &["alpha", "alpha+beta", "alpha+gamma", "balanced", "natural"],
            Axis::Budget => &["1", "2", "3", "6", "8"],
            Axis::Drift => &["0.20", "0.35", "0.50", "0.65", "1.00"],
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "horizon" => Ok(Axis::Horizon),
            "roles" => Ok(Axis::Roles),
            "budget" => Ok(Axis::Budget),
            "drift" => Ok(Axis::Drift),
            other => Err(format!("unknown axis `{other}` (horizon, roles, budget or drift)")),
        }
    }
}

/// Apply one axis value to a base run configuration.
pub fn apply(base: &RunConfig, axis: Axis, value: &str) -> anyhow::Result<RunConfig> {
    let mut cfg = base.clone();
    match axis {
        Axis::Horizon => {
            cfg.horizon_steps = value.parse().with_context(|| format!("horizon `{value}`"))?;
        }
        Axis::Budget => {
            cfg.scoring.shortlist_k = value.parse().with_context(|| format!("budget `{value}`"))?;
        }
        Axis::Drift => {
            let tau: f64 = value.parse().with_context(|| format!("drift `{value}`"))?;
            cfg.drift = cfg.drift.with_uniform_tau(tau);
        }
        Axis::Roles => match value {
            "balanced" | "abg-balanced" => {
                cfg.roles = RoleSet::ALL;
                cfg.prompt_mode = PromptMode::Balanced;
            }
            "natural" | "abg-natural" => {
                cfg.roles = RoleSet::ALL;
                cfg.prompt_mode = PromptMode::Natural;
            }
            other => cfg.roles = other.parse().map_err(anyhow::Error::msg)?,
        },
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cell_id(axis: Axis, value: &str) -> String {
    format!("{axis}={value}")
}

/// Run one configuration over `seeds` in parallel. Records come back in the
/// order of `seeds`.
pub fn run_seeds(exp: &ExperimentConfig, run: &RunConfig, seeds: &[u64]) -> anyhow::Result<Vec<EpisodeRecord>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut selector = exp.make_selector()?;
            let mut runtime = exp.make_runtime()?;
            run_episode(run, seed, selector.as_mut(), runtime.as_mut())
                .with_context(|| format!("seed {seed}"))
        })
        .collect()
}

#[derive(Debug)]
pub struct CellResult {
    pub id: String,
    pub outcome: anyhow::Result<(Vec<EpisodeRecord>, MetricsSummary)>,
}

/// Run every cell of a sweep. A failing cell is reported in its result and
/// does not stop the others. With `out`, each cell is written to `out/<id>/`.
pub fn run_sweep(
    exp: &ExperimentConfig,
    axis: Axis,
    values: &[String],
    out: Option<&Path>,
) -> anyhow::Result<Vec<CellResult>> {
    if values.is_empty() {
        bail!("no values for axis {axis}");
    }
    let seeds = exp.seeds()?.to_vec();
    let results: Vec<CellResult> = values
        .par_iter()
        .map(|value| {
            let id = cell_id(axis, value);
            let outcome = (|| {
                let run = apply(&exp.run, axis, value)?;
                let records = run_seeds(exp, &run, &seeds)?;
                let summary = summarize(&records)?;
                if let Some(out) = out {
                    let cell_cfg = ExperimentConfig {
                        run,
                        ..exp.clone()
                    };
                    ledger::write_run(&out.join(&id), &cell_cfg, &records, &summary)?;
                }
                Ok((records, summary))
            })();
            if let Err(e) = &outcome {
                log::error!("cell {id} failed: {e:#}");
            }
            CellResult { id, outcome }
        })
        .collect();
    Ok(results)
}
