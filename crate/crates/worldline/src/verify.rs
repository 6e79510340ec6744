//! Ledger recompute pass. Reads `e1`/`e2`/`e3` as untyped JSON, recomputes
//! every summary metric from scratch and compares with `summary.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde_json::{Map, Value};

use crate::ledger::{E1, E2, E3, SUMMARY};

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub field: String,
    pub logged: Value,
    pub recomputed: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub fields_checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn lines(path: &Path) -> anyhow::Result<Vec<Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn num(v: &Value, key: &str) -> anyhow::Result<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .with_context(|| format!("missing numeric field `{key}`"))
}

fn seed_of(v: &Value) -> anyhow::Result<u64> {
    v.get("seed").and_then(Value::as_u64).context("missing `seed`")
}

fn avg(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

#[derive(Default)]
struct Episode {
    rows: Vec<Value>,
    entries: Vec<Value>,
    counters: Value,
}

struct PerEpisode {
    collided: bool,
    completion: f64,
    speed: f64,
    flap: f64,
    lane_flap: f64,
    danger: f64,
    strict: Option<f64>,
    low: Option<f64>,
    l_sel: Option<f64>,
    l_dec: f64,
    ktok_p: f64,
    ktok_c: f64,
}

fn pair_rate(actions: &[&str], a: &str, b: &str) -> f64 {
    if actions.len() < 2 {
        return 0.0;
    }
    let mut n = 0usize;
    for i in 1..actions.len() {
        let (x, y) = (actions[i - 1], actions[i]);
        if (x == a && y == b) || (x == b && y == a) {
            n += 1;
        }
    }
    100.0 * n as f64 / (actions.len() - 1) as f64
}

fn floats(v: &Value, key: &str) -> anyhow::Result<Vec<f64>> {
    v.get(key)
        .and_then(Value::as_array)
        .with_context(|| format!("missing array `{key}`"))?
        .iter()
        .map(|x| x.as_f64().with_context(|| format!("non-numeric entry in `{key}`")))
        .collect()
}

fn episode(ep: &Episode) -> anyhow::Result<PerEpisode> {
    let c = &ep.counters;
    let steps = ep.rows.len();
    let actions: Vec<&str> = ep
        .rows
        .iter()
        .map(|r| r.get("action").and_then(Value::as_str).context("missing `action`"))
        .collect::<anyhow::Result<_>>()?;
    let speeds: Vec<f64> = ep.rows.iter().map(|r| num(r, "speed_kmh")).collect::<anyhow::Result<_>>()?;
    let mut danger = 0usize;
    for r in &ep.rows {
        if num(r, "min_ttc")? < 2.0 {
            danger += 1;
        }
    }
    let mut selected = 0usize;
    let mut low = 0usize;
    for e in ep.entries.iter().filter(|e| e["kind"] == "commit") {
        if let Some(b) = e.get("lower_score").and_then(Value::as_bool) {
            selected += 1;
            low += usize::from(b);
        }
    }
    let calls = num(c, "strategic_calls")?;
    let episode_steps = num(c, "episode_steps")?;
    let decisions = steps.max(1) as f64;
    Ok(PerEpisode {
        collided: c.get("collided").and_then(Value::as_bool).context("missing `collided`")?,
        completion: if episode_steps == 0.0 {
            100.0
        } else {
            100.0 * steps as f64 / episode_steps
        },
        speed: avg(&speeds).unwrap_or(0.0),
        flap: pair_rate(&actions, "FASTER", "SLOWER"),
        lane_flap: pair_rate(&actions, "LANE_LEFT", "LANE_RIGHT"),
        danger: if steps == 0 { 0.0 } else { 100.0 * danger as f64 / steps as f64 },
        strict: (calls > 0.0).then(|| 100.0 * num(c, "strict_parses").unwrap_or(f64::NAN) / calls),
        low: (selected > 0).then(|| 100.0 * low as f64 / selected as f64),
        l_sel: avg(&floats(c, "latencies_sel")?),
        l_dec: avg(&floats(c, "latencies_dec")?).unwrap_or(0.0),
        ktok_p: num(c, "prompt_tokens")? / 1000.0 / decisions,
        ktok_c: num(c, "completion_tokens")? / 1000.0 / decisions,
    })
}

fn wilson(successes: f64, n: f64) -> (f64, f64) {
    let z: f64 = 1.96;
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (
        100.0 * ((center - half) / denom).max(0.0),
        100.0 * ((center + half) / denom).min(1.0),
    )
}

fn mean_by(eps: &[PerEpisode], f: impl Fn(&PerEpisode) -> f64) -> f64 {
    eps.iter().map(f).sum::<f64>() / eps.len() as f64
}

fn mean_some(eps: &[PerEpisode], f: impl Fn(&PerEpisode) -> Option<f64>) -> Option<f64> {
    let xs: Vec<f64> = eps.iter().filter_map(f).collect();
    avg(&xs)
}

fn json_f(x: f64) -> Value {
    Value::from(x)
}

fn json_opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, Value::from)
}

fn bump(m: &mut BTreeMap<String, f64>, k: &str, by: f64) {
    *m.entry(k.to_owned()).or_insert(0.0) += by;
}

/// Recompute the summary of the run in `dir` from its ledgers alone.
pub fn recompute(dir: &Path) -> anyhow::Result<Map<String, Value>> {
    let mut eps: BTreeMap<u64, Episode> = BTreeMap::new();
    for c in lines(&dir.join(E3))? {
        let seed = seed_of(&c)?;
        if eps.insert(seed, Episode { counters: c, ..Episode::default() }).is_some() {
            bail!("duplicate seed {seed} in {E3}");
        }
    }
    if eps.is_empty() {
        bail!("{E3} is empty");
    }
    for r in lines(&dir.join(E1))? {
        let seed = seed_of(&r)?;
        eps.get_mut(&seed).with_context(|| format!("unknown seed {seed} in {E1}"))?.rows.push(r);
    }
    for e in lines(&dir.join(E2))? {
        let seed = seed_of(&e)?;
        eps.get_mut(&seed).with_context(|| format!("unknown seed {seed} in {E2}"))?.entries.push(e);
    }

    let first = eps.values().next().expect("non-empty").counters.clone();
    let mode = first.get("mode").and_then(Value::as_str).context("missing `mode`")?.to_owned();
    let horizon_s = num(&first, "horizon_s")?;

    let per: Vec<PerEpisode> = eps.values().map(episode).collect::<anyhow::Result<_>>()?;
    let n = per.len() as f64;
    let safe = per.iter().filter(|e| !e.collided).count() as f64;
    let l_sel = mean_some(&per, |e| e.l_sel);
    let l_dec = mean_by(&per, |e| e.l_dec);
    let lag = if mode == "reactive" {
        l_dec
    } else {
        l_sel.unwrap_or(0.0) + l_dec - horizon_s
    };

    let mut roles = BTreeMap::new();
    let mut invalidations = BTreeMap::new();
    let mut fallbacks = BTreeMap::new();
    for ep in eps.values() {
        for e in &ep.entries {
            match e["kind"].as_str() {
                Some("commit") => {
                    if let Some(r) = e.get("selected_role").and_then(Value::as_str) {
                        bump(&mut roles, r, 1.0);
                    }
                }
                Some("invalidation") => {
                    bump(&mut invalidations, e["reason"].as_str().context("missing `reason`")?, 1.0);
                }
                _ => bail!("unknown {E2} entry kind"),
            }
        }
        if let Some(m) = ep.counters.get("parser_fallbacks").and_then(Value::as_object) {
            for (k, v) in m {
                bump(&mut fallbacks, k, v.as_f64().context("non-numeric fallback count")?);
            }
        }
    }
    let total: f64 = roles.values().sum();
    let role_share: Map<String, Value> = roles.into_iter().map(|(k, v)| (k, json_f(100.0 * v / total))).collect();
    let counts = |m: BTreeMap<String, f64>| -> Map<String, Value> {
        m.into_iter().map(|(k, v)| (k, Value::from(v as u64))).collect()
    };
    let (lo, hi) = wilson(safe, n);

    let mut out = Map::new();
    out.insert("mode".into(), Value::from(mode));
    out.insert("episodes".into(), Value::from(per.len()));
    out.insert("seeds".into(), Value::from(eps.keys().copied().collect::<Vec<u64>>()));
    out.insert("horizon_s".into(), json_f(horizon_s));
    out.insert("no_collision_pct".into(), json_f(100.0 * safe / n));
    out.insert("no_collision_ci".into(), Value::from(vec![lo, hi]));
    out.insert("completion_pct".into(), json_f(mean_by(&per, |e| e.completion)));
    out.insert("mean_speed_kmh".into(), json_f(mean_by(&per, |e| e.speed)));
    out.insert("flap_pct".into(), json_f(mean_by(&per, |e| e.flap)));
    out.insert("lane_flap_pct".into(), json_f(mean_by(&per, |e| e.lane_flap)));
    out.insert("ttc_danger_pct".into(), json_f(mean_by(&per, |e| e.danger)));
    out.insert("strict_parse_pct".into(), json_opt(mean_some(&per, |e| e.strict)));
    out.insert("low_score_pct".into(), json_opt(mean_some(&per, |e| e.low)));
    out.insert("mean_l_sel".into(), json_opt(l_sel));
    out.insert("mean_l_dec".into(), json_f(l_dec));
    out.insert("effective_lag".into(), json_f(lag));
    out.insert("prompt_ktok_per_decision".into(), json_f(mean_by(&per, |e| e.ktok_p)));
    out.insert("completion_ktok_per_decision".into(), json_f(mean_by(&per, |e| e.ktok_c)));
    out.insert("role_share_pct".into(), Value::Object(role_share));
    out.insert("invalidations".into(), Value::Object(counts(invalidations)));
    out.insert("parser_fallbacks".into(), Value::Object(counts(fallbacks)));
    Ok(out)
}

/// Compare the recomputed summary with `summary.json`, field by field and exactly.
pub fn verify(dir: &Path) -> anyhow::Result<VerifyReport> {
    let path = dir.join(SUMMARY);
    let logged: Value = serde_json::from_str(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
    let logged = logged.as_object().context("summary.json is not an object")?;
    let fresh = recompute(dir)?;
    let mut report = VerifyReport::default();
    for key in logged.keys().chain(fresh.keys().filter(|k| !logged.contains_key(*k))) {
        report.fields_checked += 1;
        let a = logged.get(key).cloned().unwrap_or(Value::Null);
        let b = fresh.get(key).cloned().unwrap_or(Value::Null);
        if a != b {
            report.mismatches.push(Mismatch {
                field: key.clone(),
                logged: a,
                recomputed: b,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::ledger::write_run;
    use worldline_core::episode::run_episode;
    use worldline_core::selector::{CautiousRuntime, ScriptedPolicy, ScriptedSelector};
    use worldline_core::{summarize, Mode, RunConfig};

    #[test]
    fn recompute_matches_summary_exactly() {
        for mode in [Mode::Reactive, Mode::Dual] {
            let cfg = ExperimentConfig {
                run: RunConfig {
                    mode,
                    ..RunConfig::default()
                },
                ..ExperimentConfig::default()
            };
            let records: Vec<_> = (1..=6)
                .map(|s| {
                    run_episode(
                        &cfg.run,
                        s,
                        &mut ScriptedSelector::new(ScriptedPolicy::RoundRobinRole),
                        &mut CautiousRuntime { ttc_threshold: 6.0 },
                    )
                    .unwrap()
                })
                .collect();
            let summary = summarize(&records).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_run(dir.path(), &cfg, &records, &summary).unwrap();
            let report = verify(dir.path()).unwrap();
            assert!(report.ok(), "{mode}: {:?}", report.mismatches);
            assert!(report.fields_checked >= 20);
        }
    }

    #[test]
    fn tampered_summary_is_caught() {
        let cfg = ExperimentConfig::default();
        let records: Vec<_> = (1..=3).map(|s| worldline_core::episode::run_deterministic(&cfg.run, s).unwrap()).collect();
        let mut summary = summarize(&records).unwrap();
        summary.mean_speed_kmh += 1e-9;
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &cfg, &records, &summary).unwrap();
        let report = verify(dir.path()).unwrap();
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].field, "mean_speed_kmh");
    }
}
