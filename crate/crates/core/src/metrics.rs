//! Episode-level metrics, seed-mean aggregation, effective lag and Wilson
//! intervals.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::PrimitiveAction;
use crate::episode::{EpisodeRecord, Mode};

/// Steps whose measured minimum TTC falls below this count as TTC danger (s).
pub const TTC_DANGER_S: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("wilson interval needs n >= 1 and successes <= n (got {successes}/{n})")]
    BadCounts { successes: u64, n: u64 },
    #[error("no episodes to summarize")]
    Empty,
    #[error("episodes mix modes or horizons")]
    Mixed,
}

/// Residual lag a mode leaves after its buffer: the decision latency for
/// reactive runs, call cost minus horizon for buffered runs.
pub fn effective_lag(mode: Mode, l_sel: f64, l_dec: f64, horizon_s: f64) -> f64 {
    if mode.is_buffered() {
        l_sel + l_dec - horizon_s
    } else {
        l_dec
    }
}

/// Wilson score interval for `successes` out of `n`, in percent.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<(f64, f64), MetricsError> {
    if n == 0 || successes > n {
        return Err(MetricsError::BadCounts { successes, n });
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p + z2 / (2.0 * nf);
    let half = z * libm::sqrt(p * (1.0 - p) / nf + z2 / (4.0 * nf * nf));
    let lo = ((center - half) / denom).max(0.0);
    let hi = ((center + half) / denom).min(1.0);
    Ok((100.0 * lo, 100.0 * hi))
}

fn reversals(actions: &[PrimitiveAction], pair: (PrimitiveAction, PrimitiveAction)) -> usize {
    actions
        .windows(2)
        .filter(|w| (w[0], w[1]) == pair || (w[1], w[0]) == pair)
        .count()
}

/// Percent of consecutive decision pairs that swap FASTER and SLOWER.
/// Fewer than two decisions give 0.
pub fn flap_rate(actions: &[PrimitiveAction]) -> f64 {
    if actions.len() < 2 {
        return 0.0;
    }
    let n = reversals(actions, (PrimitiveAction::Faster, PrimitiveAction::Slower));
    100.0 * n as f64 / (actions.len() - 1) as f64
}

/// Same as [`flap_rate`] for LANE_LEFT and LANE_RIGHT.
pub fn lane_flap_rate(actions: &[PrimitiveAction]) -> f64 {
    if actions.len() < 2 {
        return 0.0;
    }
    let n = reversals(actions, (PrimitiveAction::LaneLeft, PrimitiveAction::LaneRight));
    100.0 * n as f64 / (actions.len() - 1) as f64
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Per-episode values before seed averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub collided: bool,
    pub completion_pct: f64,
    pub mean_speed_kmh: f64,
    pub flap_pct: f64,
    pub lane_flap_pct: f64,
    pub ttc_danger_pct: f64,
    pub strict_parse_pct: Option<f64>,
    pub low_score_pct: Option<f64>,
    pub mean_l_sel: Option<f64>,
    pub mean_l_dec: f64,
    pub prompt_ktok_per_decision: f64,
    pub completion_ktok_per_decision: f64,
}

pub fn episode_metrics(r: &EpisodeRecord) -> EpisodeMetrics {
    let e3 = &r.e3;
    let steps = r.e1.len();
    let actions: Vec<PrimitiveAction> = r.e1.iter().map(|s| s.action).collect();
    let speeds: Vec<f64> = r.e1.iter().map(|s| s.speed_kmh).collect();
    let danger = r.e1.iter().filter(|s| s.min_ttc < TTC_DANGER_S).count();
    let selected: Vec<bool> = r.commits().filter_map(|c| c.lower_score).collect();
    let low = selected.iter().filter(|&&b| b).count();
    let decisions = steps.max(1) as f64;
    EpisodeMetrics {
        seed: e3.seed,
        collided: e3.collided,
        completion_pct: if e3.episode_steps == 0 {
            100.0
        } else {
            100.0 * steps as f64 / e3.episode_steps as f64
        },
        mean_speed_kmh: mean(&speeds).unwrap_or(0.0),
        flap_pct: flap_rate(&actions),
        lane_flap_pct: lane_flap_rate(&actions),
        ttc_danger_pct: if steps == 0 { 0.0 } else { 100.0 * danger as f64 / steps as f64 },
        strict_parse_pct: (e3.strategic_calls > 0)
            .then(|| 100.0 * e3.strict_parses as f64 / e3.strategic_calls as f64),
        low_score_pct: (!selected.is_empty()).then(|| 100.0 * low as f64 / selected.len() as f64),
        mean_l_sel: mean(&e3.latencies_sel),
        mean_l_dec: mean(&e3.latencies_dec).unwrap_or(0.0),
        prompt_ktok_per_decision: e3.prompt_tokens as f64 / 1000.0 / decisions,
        completion_ktok_per_decision: e3.completion_tokens as f64 / 1000.0 / decisions,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mode: Mode,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub horizon_s: f64,
    pub no_collision_pct: f64,
    pub no_collision_ci: (f64, f64),
    pub completion_pct: f64,
    pub mean_speed_kmh: f64,
    pub flap_pct: f64,
    pub lane_flap_pct: f64,
    pub ttc_danger_pct: f64,
    pub strict_parse_pct: Option<f64>,
    pub low_score_pct: Option<f64>,
    pub mean_l_sel: Option<f64>,
    pub mean_l_dec: f64,
    pub effective_lag: f64,
    pub prompt_ktok_per_decision: f64,
    pub completion_ktok_per_decision: f64,
    /// Share of accepted selections per role (percent).
    pub role_share_pct: BTreeMap<String, f64>,
    /// Invalidation entries per reason over all episodes.
    pub invalidations: BTreeMap<String, u64>,
    pub parser_fallbacks: BTreeMap<String, u64>,
}

fn mean_of<F: Fn(&EpisodeMetrics) -> f64>(eps: &[EpisodeMetrics], f: F) -> f64 {
    eps.iter().map(f).sum::<f64>() / eps.len() as f64
}

fn mean_some<F: Fn(&EpisodeMetrics) -> Option<f64>>(eps: &[EpisodeMetrics], f: F) -> Option<f64> {
    let xs: Vec<f64> = eps.iter().filter_map(f).collect();
    mean(&xs)
}

/// Aggregate episodes of one cell. Every rate is computed per episode first
/// and then averaged, so the result does not depend on episode order beyond
/// floating-point summation.
pub fn summarize(records: &[EpisodeRecord]) -> Result<MetricsSummary, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    let mode = first.e3.mode.ok_or(MetricsError::Mixed)?;
    let horizon_s = first.e3.horizon_s;
    if records
        .iter()
        .any(|r| r.e3.mode != Some(mode) || r.e3.horizon_s != horizon_s)
    {
        return Err(MetricsError::Mixed);
    }
    let mut sorted: Vec<&EpisodeRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.e3.seed);
    let eps: Vec<EpisodeMetrics> = sorted.iter().map(|r| episode_metrics(r)).collect();

    let n = eps.len() as u64;
    let safe = eps.iter().filter(|e| !e.collided).count() as u64;
    let mean_l_sel = mean_some(&eps, |e| e.mean_l_sel);
    let mean_l_dec = mean_of(&eps, |e| e.mean_l_dec);

    let mut roles: BTreeMap<String, u64> = BTreeMap::new();
    let mut invalidations = BTreeMap::new();
    let mut parser_fallbacks = BTreeMap::new();
    for r in &sorted {
        for c in r.commits() {
            if let Some(role) = c.selected_role {
                *roles.entry(String::from(role.name())).or_insert(0) += 1;
            }
        }
        for i in r.invalidations() {
            *invalidations.entry(String::from(i.reason.name())).or_insert(0) += 1;
        }
        for (k, v) in &r.e3.parser_fallbacks {
            *parser_fallbacks.entry(k.clone()).or_insert(0) += v;
        }
    }
    let total: u64 = roles.values().sum();
    let role_share_pct = roles
        .into_iter()
        .map(|(k, v)| (k, 100.0 * v as f64 / total as f64))
        .collect();

    Ok(MetricsSummary {
        mode,
        episodes: eps.len(),
        seeds: eps.iter().map(|e| e.seed).collect(),
        horizon_s,
        no_collision_pct: 100.0 * safe as f64 / n as f64,
        no_collision_ci: wilson_interval(safe, n, 1.96)?,
        completion_pct: mean_of(&eps, |e| e.completion_pct),
        mean_speed_kmh: mean_of(&eps, |e| e.mean_speed_kmh),
        flap_pct: mean_of(&eps, |e| e.flap_pct),
        lane_flap_pct: mean_of(&eps, |e| e.lane_flap_pct),
        ttc_danger_pct: mean_of(&eps, |e| e.ttc_danger_pct),
        strict_parse_pct: mean_some(&eps, |e| e.strict_parse_pct),
        low_score_pct: mean_some(&eps, |e| e.low_score_pct),
        mean_l_sel,
        mean_l_dec,
        effective_lag: effective_lag(mode, mean_l_sel.unwrap_or(0.0), mean_l_dec, horizon_s),
        prompt_ktok_per_decision: mean_of(&eps, |e| e.prompt_ktok_per_decision),
        completion_ktok_per_decision: mean_of(&eps, |e| e.completion_ktok_per_decision),
        role_share_pct,
        invalidations,
        parser_fallbacks,
    })
}
