//! Acceptance checks. One PASS/FAIL line per criterion; exits nonzero on any failure.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use worldline::config::ExperimentConfig;
use worldline::sweep::{apply, run_seeds, run_sweep, Axis};
use worldline::table::row;
use worldline::{ledger, verify};
use worldline_core::arbiter::{observe, ExecStatus, Expected};
use worldline_core::contract::{Authority, CommitFamily, Comparator, ConditionAtom, ForecastContract, Metric};
use worldline_core::encoder::AccelProxies;
use worldline_core::scenario::{random_compact_state, random_execution, random_observables};
use worldline_core::seed::{mix64, rng};
use worldline_core::{
    arbitrate, check_invalid, feasible_actions, generate_all, init_episode, parse_atom, step_decision, summarize,
    wilson_interval, DecisionProvenance, DriftConfig, EnvConfig, InvalidationReason, Mode, PrimitiveAction,
    RiskConfig, RoleSet, RunConfig, WorldlineExecutionState,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn exp(mode: Mode, selector: &str) -> ExperimentConfig {
    let mut e = ExperimentConfig::default();
    e.run.mode = mode;
    e.selector = selector.parse().unwrap();
    e
}

fn horizon_sweep_lags() -> Check {
    let start = Instant::now();
    let e = exp(Mode::Dual, "scripted:top");
    let values: Vec<String> = ["1", "2", "4", "8", "12"].map(String::from).to_vec();
    let cells = run_sweep(&e, Axis::Horizon, &values, None).map_err(|e| e.to_string())?;
    let mut lags = Vec::new();
    for (cell, want) in cells.iter().zip([3.0, 2.0, 0.0, -4.0, -8.0]) {
        let (recs, s) = cell.outcome.as_ref().map_err(|e| format!("{}: {e:#}", cell.id))?;
        ensure(recs.len() == 10, || format!("{}: {} episodes", cell.id, recs.len()))?;
        ensure((s.effective_lag - want).abs() <= 1e-9, || {
            format!("{}: lag {} want {want}", cell.id, s.effective_lag)
        })?;
        lags.push(s.effective_lag);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("lags {lags:?} in {secs:.1}s"))
}

fn wilson_all_successes() -> Check {
    let (lo, hi) = wilson_interval(10, 10, 1.96).map_err(|e| e.to_string())?;
    ensure((lo - 72.2).abs() <= 0.1 && (hi - 100.0).abs() <= 0.1, || format!("[{lo}, {hi}]"))?;
    Ok(format!("[{lo:.2}, {hi:.2}]"))
}

fn single_branch_budget_never_lowers_score() -> Check {
    let mut seen = Vec::new();
    for sel in ["scripted:top", "scripted:prefer_stress", "scripted:safest_qsaf", "scripted:round_robin_role"] {
        for mode in [Mode::Reactive, Mode::Dual] {
            let e = exp(mode, sel);
            let run = apply(&e.run, Axis::Budget, "1").map_err(|e| e.to_string())?;
            let recs = run_seeds(&e, &run, &[1, 2, 3, 4, 5]).map_err(|e| e.to_string())?;
            let s = summarize(&recs).map_err(|e| e.to_string())?;
            ensure(s.low_score_pct == Some(0.0), || format!("{sel} {mode}: {:?}", s.low_score_pct))?;
            seen.push(sel);
        }
    }
    let recs: Vec<_> = (1..=5)
        .map(|s| worldline_core::episode::run_deterministic(&apply(&RunConfig::default(), Axis::Budget, "1").unwrap(), s))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let s = summarize(&recs).map_err(|e| e.to_string())?;
    ensure(s.low_score_pct == Some(0.0), || format!("analytical_top: {:?}", s.low_score_pct))?;
    Ok(format!("{} selector/mode cells at 0.0%", seen.len() + 1))
}

fn contract(authority: Authority, abort: &str, issue_step: usize) -> WorldlineExecutionState {
    WorldlineExecutionState {
        forecast: Some(ForecastContract {
            branch_id: "alpha-1-0".into(),
            action: PrimitiveAction::Idle,
            commit_family: CommitFamily::Keep,
            horizon_steps: 3,
            validity: vec![parse_atom("front_gap_ge:10.0").unwrap()],
            abort: vec![parse_atom(abort).unwrap()],
            fallback: PrimitiveAction::Slower,
            authority,
            issue_step,
        }),
        expected: Some(Expected {
            front_gap: 30.0,
            min_ttc: 8.0,
            lane: 1,
            speed: 20.0,
        }),
        steps_executed: 1,
        status: ExecStatus::Active,
        refresh_pending: false,
    }
}

fn calm_state() -> worldline_core::CompactState {
    let mut s = random_compact_state(&mut rng(7, 99, 0), 0);
    s.ego.lane = 1;
    s.meta.feasible = PrimitiveAction::ALL.to_vec();
    s
}

fn arbitration_safety() -> Check {
    let cfg = DriftConfig::default();
    let mut invalid_steps = 0;
    let n = 5000;
    for i in 0..n {
        let mut r = rng(11, 77, i);
        let state = random_compact_state(&mut r, 6);
        let exec = random_execution(&mut r, &state);
        let obs = random_observables(&mut r, &exec, &state, &cfg);
        let invalid = check_invalid(&exec, &obs, &cfg).is_some();
        invalid_steps += u32::from(invalid);
        let (d, _) = arbitrate(&exec, &state, &obs, Some(PrimitiveAction::Idle), &cfg);
        ensure(!(invalid && d.provenance == DecisionProvenance::Buffered), || {
            format!("step {i} buffered while invalid")
        })?;
    }
    let state = calm_state();
    for authority in Authority::ALL {
        let exec = contract(authority, "front_gap_lt:50.0", 5);
        let obs = observe(&exec, 30.0, 8.0, 1, 6, &cfg);
        let (d, next) = arbitrate(&exec, &state, &obs, Some(PrimitiveAction::Faster), &cfg);
        ensure(
            d.provenance == DecisionProvenance::Fallback
                && d.invalidation == Some(InvalidationReason::Abort)
                && d.action == PrimitiveAction::Slower
                && next.refresh_pending,
            || format!("authority {}: {d:?}", authority.name()),
        )?;
    }
    Ok(format!("{n} random steps ({invalid_steps} invalid), abort falls back at all 3 authorities"))
}

fn uniform_tau_one_disables_drift() -> Check {
    let e = exp(Mode::Dual, "scripted:round_robin_role");
    let run = apply(&e.run, Axis::Drift, "1.00").map_err(|e| e.to_string())?;
    let recs = run_seeds(&e, &run, e.seeds().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let drift = recs.iter().flat_map(|r| r.invalidations()).filter(|i| i.reason == InvalidationReason::Drift).count();
    let others = recs.iter().flat_map(|r| r.invalidations()).count();
    ensure(drift == 0, || format!("{drift} drift invalidations"))?;

    let cfg = run.drift;
    let state = calm_state();
    let mut exec = contract(Authority::Low, "min_ttc_lt:2.0", 5);
    exec.expected.as_mut().unwrap().lane = 0;
    let cases = [
        ("expired", 9, 30.0, 8.0, InvalidationReason::Expired),
        ("abort", 6, 30.0, 1.0, InvalidationReason::Abort),
        ("validity", 6, 5.0, 8.0, InvalidationReason::Validity),
    ];
    for (name, step, gap, ttc, want) in cases {
        let mut floor_free = cfg.clone();
        floor_free.floor.gap_floor = 0.0;
        floor_free.floor.ttc_floor = 0.0;
        let obs = observe(&exec, gap, ttc, 1, step, &floor_free);
        let (d, _) = arbitrate(&exec, &state, &obs, None, &floor_free);
        ensure(d.invalidation == Some(want), || format!("{name}: {d:?}"))?;
    }
    let obs = observe(&exec, 0.0, 0.0, 2, 6, &cfg);
    ensure(obs.drift_score > 0.9, || format!("worst-case drift only {}", obs.drift_score))?;
    ensure(check_invalid(&exec, &obs, &cfg) != Some(InvalidationReason::Drift), || "drift at 1.0".into())?;
    Ok(format!("0 drift of {others} invalidations over {} episodes; expiry/abort/validity still fire", recs.len()))
}

fn branch_cardinality() -> Check {
    let roles = ["alpha", "alpha+beta", "alpha+gamma", "alpha+beta+gamma"];
    let mut cells = 0;
    for n_alpha in [1, 2, 3] {
        for k in [0, 1, 2, 3] {
            for role_text in roles {
                let roles: RoleSet = role_text.parse().map_err(|e: String| e)?;
                let cfg = RiskConfig {
                    n_alpha,
                    k_actors: k,
                    ..RiskConfig::default()
                };
                for i in 0..200 {
                    let cell = (n_alpha * 100 + k * 10) as u64;
                    let mut r = rng(cell, 5, i);
                    let state = random_compact_state(&mut r, 8);
                    let acts = feasible_actions(&state, &AccelProxies::default());
                    let set = generate_all(&state, &acts, 3.0, roles, &mut r, &cfg);
                    let a = acts.len();
                    let bound = n_alpha * a + usize::from(roles.beta) * k * a + usize::from(roles.gamma) * a;
                    let n = set.branches.len();
                    ensure(n <= bound, || format!("n_alpha={n_alpha} K={k} {role_text}: {n} > {bound}"))?;
                    if role_text == "alpha" {
                        ensure(n == n_alpha * a, || format!("n_alpha={n_alpha} K={k} alpha: {n} != {}", n_alpha * a))?;
                    }
                }
                cells += 1;
            }
        }
    }
    Ok(format!("{cells} cells x 200 states within bound"))
}

fn threshold_for(metric: Metric, i: u64) -> f64 {
    let u = (mix64(i) >> 11) as f64 / (1u64 << 53) as f64;
    match (i % 4, metric) {
        (0, Metric::DriftScore) => (i % 2) as f64,
        (0, _) => (i % 7) as f64,
        (_, Metric::DriftScore) => u,
        (1, _) => (u * 1000.0).round() / 100.0,
        _ => u * 80.0,
    }
}

fn malformed(i: u64) -> (String, &'static str) {
    let h = mix64(i.wrapping_add(0x5eed));
    let metric = Metric::ALL[(h % 3) as usize];
    let cmp = Comparator::ALL[((h >> 8) % 4) as usize];
    let junk = ["speed", "gap", "front", "ttc_min", "", "FRONT_GAP", "drift"];
    let bad_cmp = ["eq", "ne", "", "GE", "gte", "<", "ge_"];
    let bad_thr = ["", "-1.0", "1e3", "abc", " 3.0", "3.0 ", "1.", ".5", "+2", "NaN", "inf", "1,5", "0x10"];
    match i % 4 {
        0 => (format!("{}_{}:{}", junk[((h >> 16) % 7) as usize], cmp.name(), 3.0), "unknown_metric"),
        1 => {
            let c = bad_cmp[((h >> 16) % 7) as usize];
            let sep = if c.is_empty() { "" } else { "_" };
            (format!("{}{sep}{c}:3.0", metric.name()), "unknown_comparator")
        }
        2 => (
            format!("{}_{}:{}", metric.name(), cmp.name(), bad_thr[((h >> 16) % 13) as usize]),
            "malformed_threshold",
        ),
        _ => (format!("drift_score_{}:{}.{}", cmp.name(), 2 + (h >> 16) % 50, (h >> 24) % 10), "threshold_out_of_range"),
    }
}

fn atom_grammar() -> Check {
    let mut pairs = 0;
    for metric in Metric::ALL {
        for cmp in Comparator::ALL {
            pairs += 1;
            for i in 0..100 {
                let atom = ConditionAtom::new(metric, cmp, threshold_for(metric, i)).map_err(|e| e.to_string())?;
                let text = atom.to_string();
                let back = parse_atom(&text).map_err(|e| format!("{text}: {}", e.kind()))?;
                ensure(back == atom && back.to_string() == text, || format!("{text} -> {back}"))?;
            }
        }
    }
    for i in 0..10_000 {
        let (text, want) = malformed(i);
        let got = parse_atom(&text).map(|a| a.to_string()).map_err(|e| e.kind());
        ensure(got == Err(want), || format!("`{text}`: {got:?}, want {want}"))?;
    }
    Ok(format!("{pairs} pairs x 100 thresholds round-trip; 10000 malformed inputs classified"))
}

fn deterministic_reruns_are_identical() -> Check {
    let e = ExperimentConfig::default();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let recs = run_seeds(&e, &e.run, e.seeds().unwrap()).map_err(|e| e.to_string())?;
        let s = summarize(&recs).map_err(|e| e.to_string())?;
        ledger::write_run(&dir, &e, &recs, &s).map_err(|e| e.to_string())?;
        dirs.push(dir);
    }
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    for f in [ledger::E1, ledger::E2, ledger::E3] {
        ensure(read(&dirs[0], f) == read(&dirs[1], f), || format!("{f} differs"))?;
    }
    let report = verify::verify(&dirs[0]).map_err(|e| e.to_string())?;
    ensure(report.ok(), || format!("{:?}", report.mismatches))?;
    Ok(format!("e1/e2/e3 byte-identical; {} summary fields recomputed exactly", report.fields_checked))
}

fn collision_oracle() -> Check {
    let env = EnvConfig::default();
    let (mut agree, mut collided) = (0, 0);
    for ep in 0..100u64 {
        let mut state = init_episode(1000 + ep, &env).map_err(|e| e.to_string())?;
        let mut oracle = false;
        for step in 0..env.episode_steps {
            let h = mix64(ep * 1000 + step as u64);
            let feasible: Vec<_> = PrimitiveAction::ALL
                .into_iter()
                .filter(|a| a.target_lane(state.ego.lane, env.lane_count).is_some())
                .collect();
            let action = feasible[(h % feasible.len() as u64) as usize];
            let out = step_decision(&state, action, &env).map_err(|e| e.to_string())?;
            ensure(out.trace.len() == env.substeps(), || format!("trace has {} snapshots", out.trace.len()))?;
            let hit = out.trace.iter().any(|snap| {
                snap.traffic.iter().any(|v| {
                    (v.x - snap.ego.x).abs() < env.vehicle_length && (v.y - snap.ego.y).abs() < env.vehicle_width
                })
            });
            oracle |= hit;
            ensure(out.collision == hit, || format!("episode {ep} step {step}: flag {} oracle {hit}", out.collision))?;
            state = out.new_state;
            if state.collided {
                break;
            }
        }
        ensure(state.collided == oracle, || format!("episode {ep}: state {} oracle {oracle}", state.collided))?;
        agree += 1;
        collided += u32::from(oracle);
    }
    Ok(format!("{agree}/100 episodes agree ({collided} with contact)"))
}

fn reference_modes_complete() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (mode, sel) in [(Mode::Reactive, "scripted:top"), (Mode::Dual, "scripted:top"), (Mode::Deterministic, "analytical_top")] {
        let e = exp(mode, sel);
        let recs = run_seeds(&e, &e.run, e.seeds().unwrap()).map_err(|e| e.to_string())?;
        ensure(recs.len() == 10, || format!("{mode}: {} episodes", recs.len()))?;
        for r in &recs {
            let want = if r.e3.collided { r.e1.len() } else { 20 };
            ensure(r.e1.len() == want && r.e3.episode_steps == 20, || {
                format!("{mode} seed {}: {} steps", r.e3.seed, r.e1.len())
            })?;
        }
        let s = summarize(&recs).map_err(|e| e.to_string())?;
        let cells = row(mode.name(), &s);
        ensure(cells.iter().all(|c| c != "n/a"), || format!("{mode}: {cells:?}"))?;
        let dir = tmp.path().join(mode.name());
        ledger::write_run(&dir, &e, &recs, &s).map_err(|e| e.to_string())?;
        let back = ledger::read_records(&dir).map_err(|e| format!("{mode}: {e:#}"))?;
        ensure(back.len() == 10, || format!("{mode}: read back {}", back.len()))?;
        out.push(format!("{mode} no-collision {:.0}%", s.no_collision_pct));
    }
    Ok(out.join(", "))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("horizon sweep effective lag", horizon_sweep_lags),
        ("wilson interval 10/10", wilson_all_successes),
        ("k=1 low-score rate", single_branch_budget_never_lowers_score),
        ("arbiter never buffers an invalid forecast", arbitration_safety),
        ("uniform tau 1.00 disables drift only", uniform_tau_one_disables_drift),
        ("branch set cardinality", branch_cardinality),
        ("atom grammar round trip and fuzz", atom_grammar),
        ("deterministic ledgers reproduce and verify", deterministic_reruns_are_identical),
        ("collision flag matches overlap oracle", collision_oracle),
        ("reference modes complete with valid ledgers", reference_modes_complete),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
