//! Per-step runtime arbitration over a committed forecast.
//!
//! Order of precedence inside [`arbitrate`]: hard-safety floor, then the
//! invalidation predicate, then commit-family completion, then reuse of the
//! buffered action. A buffered action is emitted only when
//! [`check_invalid`] returned `None` on the same observables.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::action::{PrimitiveAction, SafetyFloor};
use crate::contract::{Authority, CommitFamily, ForecastContract, RuntimeObservables};
use crate::encoder::CompactState;
use crate::worldline::WorldLineBranch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftConfig {
    pub w_gap: f64,
    pub w_ttc: f64,
    pub w_lane: f64,
    pub tau_low: f64,
    pub tau_med: f64,
    pub tau_high: f64,
    pub floor: SafetyFloor,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            w_gap: 0.4,
            w_ttc: 0.4,
            w_lane: 0.2,
            tau_low: 0.20,
            tau_med: 0.35,
            tau_high: 0.50,
            floor: SafetyFloor::default(),
        }
    }
}

impl DriftConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if [self.w_gap, self.w_ttc, self.w_lane]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err("drift weights must be non-negative");
        }
        if !(0.0 <= self.tau_low
            && self.tau_low <= self.tau_med
            && self.tau_med <= self.tau_high
            && self.tau_high <= 1.0)
        {
            return Err("authority thresholds must satisfy 0 <= low <= med <= high <= 1");
        }
        Ok(())
    }

    /// Set all three authority thresholds to `tau`.
    pub fn with_uniform_tau(mut self, tau: f64) -> Self {
        self.tau_low = tau;
        self.tau_med = tau;
        self.tau_high = tau;
        self
    }
}

pub fn authority_threshold(rho: Authority, cfg: &DriftConfig) -> f64 {
    match rho {
        Authority::Low => cfg.tau_low,
        Authority::Med => cfg.tau_med,
        Authority::High => cfg.tau_high,
    }
}

/// Observables copied from the selected branch at commit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub front_gap: f64,
    pub min_ttc: f64,
    pub lane: usize,
    pub speed: f64,
}

impl Expected {
    pub fn from_branch(b: &WorldLineBranch) -> Self {
        Self {
            front_gap: b.front_gap,
            min_ttc: b.min_ttc,
            lane: b.predicted_lane,
            speed: b.predicted_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecStatus {
    #[default]
    None,
    Active,
    Softened,
    Expired,
    Aborted,
    Overridden,
}

impl ExecStatus {
    pub fn name(self) -> &'static str {
        match self {
            ExecStatus::None => "none",
            ExecStatus::Active => "active",
            ExecStatus::Softened => "softened",
            ExecStatus::Expired => "expired",
            ExecStatus::Aborted => "aborted",
            ExecStatus::Overridden => "overridden",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldlineExecutionState {
    pub forecast: Option<ForecastContract>,
    pub expected: Option<Expected>,
    pub steps_executed: usize,
    pub status: ExecStatus,
    pub refresh_pending: bool,
}

impl WorldlineExecutionState {
    pub fn commit(contract: ForecastContract, branch: &WorldLineBranch) -> Self {
        Self {
            forecast: Some(contract),
            expected: Some(Expected::from_branch(branch)),
            steps_executed: 0,
            status: ExecStatus::Active,
            refresh_pending: false,
        }
    }

    /// A forecast the runtime may still reuse.
    pub fn live(&self) -> Option<&ForecastContract> {
        match self.status {
            ExecStatus::Active | ExecStatus::Softened => self.forecast.as_ref(),
            _ => None,
        }
    }

    /// Horizon exhausted at `step` (either clock).
    pub fn is_expired_at(&self, step: usize) -> bool {
        self.live().is_some_and(|c| {
            step > c.issue_step + c.horizon_steps || self.steps_executed >= c.horizon_steps
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvalidationReason {
    Expired,
    Drift,
    Validity,
    Abort,
}

impl InvalidationReason {
    pub fn name(self) -> &'static str {
        match self {
            InvalidationReason::Expired => "expired",
            InvalidationReason::Drift => "drift",
            InvalidationReason::Validity => "validity",
            InvalidationReason::Abort => "abort",
        }
    }

    fn status(self) -> ExecStatus {
        match self {
            InvalidationReason::Expired => ExecStatus::Expired,
            _ => ExecStatus::Aborted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionProvenance {
    Buffered,
    Softened,
    Fallback,
    Override,
    Reactive,
}

impl DecisionProvenance {
    pub fn name(self) -> &'static str {
        match self {
            DecisionProvenance::Buffered => "buffered",
            DecisionProvenance::Softened => "softened",
            DecisionProvenance::Fallback => "fallback",
            DecisionProvenance::Override => "override",
            DecisionProvenance::Reactive => "reactive",
        }
    }
}

pub const TAG_HARD_SAFETY: &str = "hard_safety";
pub const TAG_NO_FORECAST: &str = "no_forecast";
pub const TAG_FAMILY_COMPLETE: &str = "family_complete";
pub const TAG_RUNTIME_CHOICE: &str = "runtime_choice";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacticalDecision {
    pub action: PrimitiveAction,
    pub provenance: DecisionProvenance,
    pub invalidation: Option<InvalidationReason>,
    pub drift: f64,
    pub reason_tag: Option<String>,
}

/// `min{1, ω_g [g*-g]_+/max(g*,1) + ω_T [T*-T]_+/max(T*,1) + ω_ℓ 1[lane ≠ lane*]}`.
pub fn drift_from(expected: &Expected, front_gap: f64, min_ttc: f64, lane: usize, cfg: &DriftConfig) -> f64 {
    let gap = (expected.front_gap - front_gap).max(0.0) / expected.front_gap.max(1.0);
    let ttc = (expected.min_ttc - min_ttc).max(0.0) / expected.min_ttc.max(1.0);
    let lane = if lane != expected.lane { 1.0 } else { 0.0 };
    (cfg.w_gap * gap + cfg.w_ttc * ttc + cfg.w_lane * lane).min(1.0)
}

/// Drift of `obs` against the committed expectations. It is 0 without a
/// forecast and on the commit step itself, where the scene still predates the
/// committed action.
pub fn drift_score(exec: &WorldlineExecutionState, obs: &RuntimeObservables, cfg: &DriftConfig) -> f64 {
    if exec.steps_executed == 0 {
        return 0.0;
    }
    exec.expected
        .as_ref()
        .map_or(0.0, |e| drift_from(e, obs.front_gap, obs.min_ttc, obs.lane, cfg))
}

/// Runtime observables with the drift field filled from `exec`.
pub fn observe(
    exec: &WorldlineExecutionState,
    front_gap: f64,
    min_ttc: f64,
    lane: usize,
    step: usize,
    cfg: &DriftConfig,
) -> RuntimeObservables {
    let mut obs = RuntimeObservables {
        front_gap,
        min_ttc,
        drift_score: 0.0,
        lane,
        step,
    };
    obs.drift_score = drift_score(exec, &obs, cfg);
    obs
}

/// First applicable invalidation reason (expired, abort, validity, drift) for
/// the live forecast, judged on `obs` (whose `drift_score` is trusted as given).
pub fn check_invalid(
    exec: &WorldlineExecutionState,
    obs: &RuntimeObservables,
    cfg: &DriftConfig,
) -> Option<InvalidationReason> {
    let c = exec.live()?;
    if exec.is_expired_at(obs.step) {
        Some(InvalidationReason::Expired)
    } else if c.abort_fires(obs) {
        Some(InvalidationReason::Abort)
    } else if !c.validity_holds(obs) {
        Some(InvalidationReason::Validity)
    } else if obs.drift_score > authority_threshold(c.authority, cfg) {
        Some(InvalidationReason::Drift)
    } else {
        None
    }
}

/// Whether the commit family's maneuver has already been achieved.
pub fn family_completed(family: CommitFamily, expected: &Expected, state: &CompactState) -> bool {
    match family {
        CommitFamily::Keep => false,
        CommitFamily::ChangeLeft | CommitFamily::ChangeRight => state.ego.lane == expected.lane,
        CommitFamily::Accelerate => state.ego.target_speed >= expected.speed - 1.0,
        CommitFamily::Decelerate => state.ego.target_speed <= expected.speed + 1.0,
    }
}

fn decision(
    action: PrimitiveAction,
    provenance: DecisionProvenance,
    invalidation: Option<InvalidationReason>,
    drift: f64,
    tag: &str,
) -> TacticalDecision {
    TacticalDecision {
        action,
        provenance,
        invalidation,
        drift,
        reason_tag: Some(String::from(tag)),
    }
}

/// One arbitration step. `analytical_top` is the action used when no forecast is live.
pub fn arbitrate(
    exec: &WorldlineExecutionState,
    state: &CompactState,
    obs: &RuntimeObservables,
    analytical_top: Option<PrimitiveAction>,
    cfg: &DriftConfig,
) -> (TacticalDecision, WorldlineExecutionState) {
    let mut next = exec.clone();
    let live = exec.live();
    let drift = if live.is_some() { obs.drift_score } else { 0.0 };

    if cfg.floor.is_breached(obs.front_gap, obs.min_ttc) {
        if live.is_some() {
            next.status = ExecStatus::Overridden;
        }
        next.refresh_pending = true;
        let d = decision(PrimitiveAction::Slower, DecisionProvenance::Override, None, drift, TAG_HARD_SAFETY);
        return (d, next);
    }

    let Some(contract) = live else {
        let action = analytical_top
            .filter(|a| state.is_feasible(*a))
            .unwrap_or(state.meta.fallback);
        next.refresh_pending = true;
        let d = decision(action, DecisionProvenance::Reactive, None, 0.0, TAG_NO_FORECAST);
        return (d, next);
    };

    if let Some(reason) = check_invalid(exec, obs, cfg) {
        let action = if state.is_feasible(contract.fallback) {
            contract.fallback
        } else {
            state.meta.fallback
        };
        next.status = reason.status();
        next.refresh_pending = true;
        let d = decision(action, DecisionProvenance::Fallback, Some(reason), drift, reason.name());
        return (d, next);
    }

    next.steps_executed += 1;
    let completed = exec
        .expected
        .as_ref()
        .is_some_and(|e| family_completed(contract.commit_family, e, state));
    if completed || !state.is_feasible(contract.action) {
        next.status = ExecStatus::Softened;
        let d = decision(PrimitiveAction::Idle, DecisionProvenance::Softened, None, drift, TAG_FAMILY_COMPLETE);
        return (d, next);
    }
    let d = TacticalDecision {
        action: contract.action,
        provenance: DecisionProvenance::Buffered,
        invalidation: None,
        drift,
        reason_tag: None,
    };
    (d, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::parse_atom;
    use crate::scenario::{random_compact_state, random_execution, random_observables};
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn keep_exec(state: &CompactState) -> WorldlineExecutionState {
        WorldlineExecutionState {
            forecast: Some(ForecastContract {
                branch_id: "alpha-1-0".into(),
                action: PrimitiveAction::Idle,
                commit_family: CommitFamily::Keep,
                horizon_steps: 3,
                validity: vec![parse_atom("front_gap_ge:4.0").unwrap()],
                abort: vec![parse_atom("min_ttc_lt:2.0").unwrap()],
                fallback: PrimitiveAction::Slower,
                authority: Authority::Med,
                issue_step: 5,
            }),
            expected: Some(Expected {
                front_gap: 20.0,
                min_ttc: 4.0,
                lane: state.ego.lane,
                speed: state.ego.speed,
            }),
            steps_executed: 0,
            status: ExecStatus::Active,
            refresh_pending: false,
        }
    }

    fn calm_state() -> CompactState {
        let mut s = random_compact_state(&mut ChaCha8Rng::seed_from_u64(1), 0);
        s.ego.lane = 1;
        s.meta.feasible = PrimitiveAction::ALL.to_vec();
        s
    }

    fn obs_for(exec: &WorldlineExecutionState, gap: f64, ttc: f64, lane: usize, step: usize) -> RuntimeObservables {
        observe(exec, gap, ttc, lane, step, &DriftConfig::default())
    }

    #[test]
    fn drift_examples() {
        let e = Expected {
            front_gap: 20.0,
            min_ttc: 4.0,
            lane: 1,
            speed: 25.0,
        };
        let c = DriftConfig::default();
        assert_eq!(drift_from(&e, 20.0, 4.0, 1, &c), 0.0);
        assert!((drift_from(&e, 10.0, 2.0, 1, &c) - 0.4).abs() < 1e-12);
        assert!((drift_from(&e, 30.0, 9.0, 0, &c) - 0.2).abs() < 1e-12);
        assert_eq!(drift_from(&e, 0.0, 0.0, 0, &c), 1.0);
    }

    #[test]
    fn authority_lookup() {
        let c = DriftConfig::default();
        assert_eq!(authority_threshold(Authority::Low, &c), 0.20);
        assert_eq!(authority_threshold(Authority::Med, &c), 0.35);
        assert_eq!(authority_threshold(Authority::High, &c), 0.50);
        let o = DriftConfig {
            tau_med: 1.0,
            tau_high: 1.0,
            ..c
        };
        assert_eq!(authority_threshold(Authority::Med, &o), 1.0);
        assert!(o.validate().is_ok());
        assert!(DriftConfig { tau_low: 0.6, ..DriftConfig::default() }.validate().is_err());
    }

    #[test]
    fn invalidation_order() {
        let s = calm_state();
        let c = DriftConfig::default();
        let mut e = keep_exec(&s);
        let at = |e: &WorldlineExecutionState, gap, ttc, step| check_invalid(e, &obs_for(e, gap, ttc, 1, step), &c);
        assert_eq!(at(&e, 20.0, 4.0, 9), Some(InvalidationReason::Expired));
        assert_eq!(at(&e, 20.0, 1.5, 9), Some(InvalidationReason::Expired));
        assert_eq!(at(&e, 20.0, 1.5, 6), Some(InvalidationReason::Abort));
        assert_eq!(at(&e, 3.0, 4.0, 6), Some(InvalidationReason::Validity));
        assert_eq!(at(&e, 20.0, 4.0, 6), None);
        e.steps_executed = 3;
        assert_eq!(at(&e, 20.0, 4.0, 6), Some(InvalidationReason::Expired));

        let e = keep_exec(&s);
        let mut o = obs_for(&e, 20.0, 4.0, 1, 6);
        o.drift_score = 0.3;
        assert_eq!(check_invalid(&e, &o, &c), None);
        o.drift_score = 0.36;
        assert_eq!(check_invalid(&e, &o, &c), Some(InvalidationReason::Drift));
    }

    #[test]
    fn abort_ignores_authority() {
        let s = calm_state();
        let c = DriftConfig::default();
        for rho in Authority::ALL {
            let mut e = keep_exec(&s);
            e.forecast.as_mut().unwrap().authority = rho;
            let o = obs_for(&e, 20.0, 1.5, 1, 6);
            assert_eq!(check_invalid(&e, &o, &c), Some(InvalidationReason::Abort));
            let (d, next) = arbitrate(&e, &s, &o, None, &c);
            assert_eq!(d.action, PrimitiveAction::Slower);
            assert_eq!(d.provenance, DecisionProvenance::Fallback);
            assert_eq!(next.status, ExecStatus::Aborted);
            assert!(next.refresh_pending);
        }
    }

    #[test]
    fn calm_keep_is_buffered() {
        let s = calm_state();
        let e = keep_exec(&s);
        let (d, next) = arbitrate(&e, &s, &obs_for(&e, 20.0, 4.0, 1, 5), None, &DriftConfig::default());
        assert_eq!(d.action, PrimitiveAction::Idle);
        assert_eq!(d.provenance, DecisionProvenance::Buffered);
        assert_eq!(d.invalidation, None);
        assert_eq!(next.steps_executed, 1);
        assert_eq!(next.status, ExecStatus::Active);
    }

    #[test]
    fn hard_floor_beats_valid_contract() {
        let s = calm_state();
        let mut e = keep_exec(&s);
        let f = e.forecast.as_mut().unwrap();
        f.abort.clear();
        f.validity.clear();
        f.authority = Authority::High;
        let o = obs_for(&e, 20.0, 0.8, 1, 5);
        assert!(o.drift_score < 0.5);
        assert_eq!(check_invalid(&e, &o, &DriftConfig::default()), None);
        let (d, next) = arbitrate(&e, &s, &o, None, &DriftConfig::default());
        assert_eq!(d.action, PrimitiveAction::Slower);
        assert_eq!(d.provenance, DecisionProvenance::Override);
        assert_eq!(d.reason_tag.as_deref(), Some(TAG_HARD_SAFETY));
        assert_eq!(next.status, ExecStatus::Overridden);
        assert!(next.refresh_pending);
        assert!(next.live().is_none());
    }

    #[test]
    fn no_forecast_is_reactive() {
        let s = calm_state();
        let e = WorldlineExecutionState::default();
        let o = obs_for(&e, 50.0, 50.0, 1, 0);
        let (d, next) = arbitrate(&e, &s, &o, Some(PrimitiveAction::Faster), &DriftConfig::default());
        assert_eq!((d.action, d.provenance), (PrimitiveAction::Faster, DecisionProvenance::Reactive));
        assert!(next.refresh_pending);
        let (d, _) = arbitrate(&e, &s, &o, None, &DriftConfig::default());
        assert_eq!(d.action, s.meta.fallback);
    }

    #[test]
    fn lane_change_softens_after_completion() {
        let mut s = calm_state();
        let mut e = keep_exec(&s);
        let f = e.forecast.as_mut().unwrap();
        f.action = PrimitiveAction::LaneLeft;
        f.commit_family = CommitFamily::ChangeLeft;
        e.expected.as_mut().unwrap().lane = 0;
        let c = DriftConfig::default();
        let o = observe(&e, 20.0, 4.0, 1, 5, &c);
        let (d, e) = arbitrate(&e, &s, &o, None, &c);
        assert_eq!(d.provenance, DecisionProvenance::Buffered);
        assert_eq!(d.action, PrimitiveAction::LaneLeft);
        s.ego.lane = 0;
        s.meta.feasible.retain(|a| *a != PrimitiveAction::LaneLeft);
        let o = observe(&e, 20.0, 4.0, 0, 6, &c);
        let (d, e) = arbitrate(&e, &s, &o, None, &c);
        assert_eq!((d.action, d.provenance), (PrimitiveAction::Idle, DecisionProvenance::Softened));
        assert_eq!(e.status, ExecStatus::Softened);
        assert_eq!(e.steps_executed, 2);
    }

    #[test]
    fn speed_families_complete_in_band() {
        let s = calm_state();
        let mut ex = Expected {
            front_gap: 1.0,
            min_ttc: 1.0,
            lane: 1,
            speed: s.ego.target_speed + 1.0,
        };
        assert!(family_completed(CommitFamily::Accelerate, &ex, &s));
        ex.speed = s.ego.target_speed + 1.5;
        assert!(!family_completed(CommitFamily::Accelerate, &ex, &s));
        ex.speed = s.ego.target_speed - 1.0;
        assert!(family_completed(CommitFamily::Decelerate, &ex, &s));
        assert!(!family_completed(CommitFamily::Keep, &ex, &s));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn safety_reuse(seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_compact_state(&mut rng, 6);
            let c = DriftConfig::default();
            let e = random_execution(&mut rng, &s);
            let o = random_observables(&mut rng, &e, &s, &c);
            let (d, next) = arbitrate(&e, &s, &o, None, &c);
            if d.provenance == DecisionProvenance::Buffered {
                prop_assert_eq!(check_invalid(&e, &o, &c), None);
                prop_assert!(!c.floor.is_breached(o.front_gap, o.min_ttc));
            }
            prop_assert_eq!(d.provenance == DecisionProvenance::Buffered, d.reason_tag.is_none());
            prop_assert_eq!(d.provenance == DecisionProvenance::Fallback, d.invalidation.is_some());
            prop_assert!(s.is_feasible(d.action));
            if e.live().is_none() {
                prop_assert!(next.live().is_none());
            }
        }

        #[test]
        fn tau_one_never_drift(seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_compact_state(&mut rng, 6);
            let c = DriftConfig::default().with_uniform_tau(1.0);
            let e = random_execution(&mut rng, &s);
            let mut o = random_observables(&mut rng, &e, &s, &c);
            o.drift_score = drift_score(&e, &o, &c);
            prop_assert_ne!(check_invalid(&e, &o, &c), Some(InvalidationReason::Drift));
        }

        #[test]
        fn drift_monotone_in_gap_deficit(g0 in 0.0f64..200.0, dg in 0.0f64..50.0, t in 0.0f64..20.0, lane in 0usize..3) {
            let e = Expected { front_gap: 60.0, min_ttc: 6.0, lane: 1, speed: 20.0 };
            let c = DriftConfig::default();
            let hi = drift_from(&e, g0, t, lane, &c);
            let lo = drift_from(&e, (g0 - dg).max(0.0), t, lane, &c);
            prop_assert!(lo >= hi);
            prop_assert!((0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn closed_statuses_stay_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let c = DriftConfig::default();
        let mut checked = 0;
        for _ in 0..2000 {
            let s = random_compact_state(&mut rng, 6);
            let mut e = random_execution(&mut rng, &s);
            let mut statuses: Vec<ExecStatus> = vec![e.status];
            for step in 0..6 {
                let mut o = random_observables(&mut rng, &e, &s, &c);
                o.step = step;
                e = arbitrate(&e, &s, &o, None, &c).1;
                statuses.push(e.status);
            }
            for w in statuses.windows(2) {
                if !matches!(w[0], ExecStatus::Active | ExecStatus::Softened) {
                    assert_eq!(w[0], w[1]);
                    checked += 1;
                }
                if w[0] == ExecStatus::Softened {
                    assert_ne!(w[1], ExecStatus::Active);
                }
            }
        }
        assert!(checked > 100);
    }
}
