//! Role-typed world-line generation.
//!
//! For every feasible action the generator emits `n_alpha` ego rollouts
//! (nominal plus progressively adverse variants), up to `K` beta branches that
//! stress one critical neighbour each, and one gamma branch carrying a hazard
//! drawn from a closed pool. The set is therefore bounded by
//! `|actions| * (n_alpha + K + 1)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::encoder::{CandidateAction, CompactState, NeighborVehicle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alpha,
    Beta,
    Gamma,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Alpha, Role::Beta, Role::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            Role::Alpha => "alpha",
            Role::Beta => "beta",
            Role::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Nominal,
    Adverse,
    ActorStress,
    HazardStress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorRole {
    FrontLead,
    RearVehicle,
    AdjacentVehicle,
}

impl ActorRole {
    pub fn name(self) -> &'static str {
        match self {
            ActorRole::FrontLead => "front_lead",
            ActorRole::RearVehicle => "rear_vehicle",
            ActorRole::AdjacentVehicle => "adjacent_vehicle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hazard {
    SuddenFrontBraking,
    RearAggression,
    AdjacentCutIn,
    BlockedLane,
    LowClearanceCorridor,
    UnexpectedObstacle,
    VisibilityDegradation,
}

impl Hazard {
    pub const ALL: [Hazard; 7] = [
        Hazard::SuddenFrontBraking,
        Hazard::RearAggression,
        Hazard::AdjacentCutIn,
        Hazard::BlockedLane,
        Hazard::LowClearanceCorridor,
        Hazard::UnexpectedObstacle,
        Hazard::VisibilityDegradation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Hazard::SuddenFrontBraking => "sudden_front_braking",
            Hazard::RearAggression => "rear_aggression",
            Hazard::AdjacentCutIn => "adjacent_cut_in",
            Hazard::BlockedLane => "blocked_lane",
            Hazard::LowClearanceCorridor => "low_clearance_corridor",
            Hazard::UnexpectedObstacle => "unexpected_obstacle",
            Hazard::VisibilityDegradation => "visibility_degradation",
        }
    }
}

/// Which enabled roles contribute branches. Alpha is always on. Serialized
/// as its display form, e.g. `"alpha+gamma"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct RoleSet {
    pub beta: bool,
    pub gamma: bool,
}

impl RoleSet {
    pub const ALPHA: RoleSet = RoleSet {
        beta: false,
        gamma: false,
    };
    pub const ALL: RoleSet = RoleSet {
        beta: true,
        gamma: true,
    };

    pub fn contains(&self, role: Role) -> bool {
        match role {
            Role::Alpha => true,
            Role::Beta => self.beta,
            Role::Gamma => self.gamma,
        }
    }

    /// Enabled roles in `(alpha, beta, gamma)` order.
    pub fn enabled(&self) -> Vec<Role> {
        Role::ALL.into_iter().filter(|r| self.contains(*r)).collect()
    }
}

impl Default for RoleSet {
    fn default() -> Self {
        RoleSet::ALL
    }
}

impl fmt::Display for RoleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("alpha")?;
        if self.beta {
            f.write_str("+beta")?;
        }
        if self.gamma {
            f.write_str("+gamma")?;
        }
        Ok(())
    }
}

impl From<RoleSet> for String {
    fn from(r: RoleSet) -> String {
        format!("{r}")
    }
}

impl TryFrom<String> for RoleSet {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for RoleSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = RoleSet::ALPHA;
        let mut saw_alpha = false;
        for part in s.split('+') {
            match part {
                "alpha" | "a" => saw_alpha = true,
                "beta" | "b" => set.beta = true,
                "gamma" | "g" => set.gamma = true,
                other => return Err(format!("unknown role `{other}`")),
            }
        }
        if !saw_alpha {
            return Err(String::from("alpha must always be enabled"));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapTarget {
    Front,
    Rear,
}

/// Fixed perturbation a hazard applies to a nominal rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardPenalty {
    pub gap_target: GapTarget,
    pub gap_mult: f64,
    pub ttc_mult: f64,
    pub risk_add: f64,
    pub comfort_add: f64,
    pub uncertainty_add: f64,
}

impl HazardPenalty {
    const fn front(gap_mult: f64, ttc_mult: f64, risk: f64, comfort: f64, unc: f64) -> Self {
        Self {
            gap_target: GapTarget::Front,
            gap_mult,
            ttc_mult,
            risk_add: risk,
            comfort_add: comfort,
            uncertainty_add: unc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HazardPenalties {
    pub sudden_front_braking: HazardPenalty,
    pub rear_aggression: HazardPenalty,
    pub adjacent_cut_in: HazardPenalty,
    pub blocked_lane: HazardPenalty,
    pub low_clearance_corridor: HazardPenalty,
    pub unexpected_obstacle: HazardPenalty,
    pub visibility_degradation: HazardPenalty,
}

impl Default for HazardPenalties {
    fn default() -> Self {
        Self {
            sudden_front_braking: HazardPenalty::front(0.5, 0.4, 0.25, 0.3, 0.1),
            rear_aggression: HazardPenalty {
                gap_target: GapTarget::Rear,
                ..HazardPenalty::front(0.5, 0.6, 0.2, 0.1, 0.1)
            },
            adjacent_cut_in: HazardPenalty::front(0.5, 0.5, 0.25, 0.2, 0.15),
            blocked_lane: HazardPenalty::front(0.4, 0.5, 0.3, 0.3, 0.2),
            low_clearance_corridor: HazardPenalty::front(0.7, 0.7, 0.15, 0.2, 0.1),
            unexpected_obstacle: HazardPenalty::front(0.6, 0.5, 0.3, 0.2, 0.25),
            visibility_degradation: HazardPenalty::front(0.9, 0.8, 0.1, 0.1, 0.3),
        }
    }
}

impl HazardPenalties {
    pub fn get(&self, hazard: Hazard) -> &HazardPenalty {
        match hazard {
            Hazard::SuddenFrontBraking => &self.sudden_front_braking,
            Hazard::RearAggression => &self.rear_aggression,
            Hazard::AdjacentCutIn => &self.adjacent_cut_in,
            Hazard::BlockedLane => &self.blocked_lane,
            Hazard::LowClearanceCorridor => &self.low_clearance_corridor,
            Hazard::UnexpectedObstacle => &self.unexpected_obstacle,
            Hazard::VisibilityDegradation => &self.visibility_degradation,
        }
    }
}

/// Per-term weights/thresholds of the collision-risk proxy, ordered (TTC, front gap, rear gap).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTerms {
    pub ttc: f64,
    pub front: f64,
    pub rear: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaStress {
    /// Leader deceleration for `front_lead` (m/s²).
    pub front_lead_decel: f64,
    /// Extra closing speed for `rear_vehicle` (m/s).
    pub rear_closing_boost: f64,
    /// Fraction of the front gap at which an `adjacent_vehicle` cuts in.
    pub cut_in_gap_factor: f64,
}

impl Default for BetaStress {
    fn default() -> Self {
        Self {
            front_lead_decel: 4.0,
            rear_closing_boost: 4.0,
            cut_in_gap_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintyLevels {
    pub alpha_nominal: f64,
    pub alpha_adverse: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for UncertaintyLevels {
    fn default() -> Self {
        Self {
            alpha_nominal: 0.0,
            alpha_adverse: 0.2,
            beta: 0.35,
            gamma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub weights: RiskTerms,
    pub thresholds: RiskTerms,
    pub adverse_gap_mult: f64,
    pub adverse_ttc_mult: f64,
    pub beta: BetaStress,
    pub hazards: HazardPenalties,
    /// Critical-actor score weight on `|Δv|`.
    pub kappa_speed: f64,
    /// Critical-actor score weight on `1 / max(gap, 1)`.
    pub kappa_gap: f64,
    pub n_alpha: usize,
    /// Critical-actor budget per action.
    pub k_actors: usize,
    /// Off-lane vehicles within this longitudinal distance count as adjacent actors.
    pub adjacent_radius: f64,
    pub comfort_accel_ref: f64,
    pub lane_change_comfort: f64,
    pub uncertainty: UncertaintyLevels,
    /// Number of intervals over `[0, H]` at which margins are sampled.
    pub margin_samples: usize,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            weights: RiskTerms {
                ttc: 0.5,
                front: 0.3,
                rear: 0.2,
            },
            thresholds: RiskTerms {
                ttc: 3.0,
                front: 15.0,
                rear: 8.0,
            },
            adverse_gap_mult: 0.7,
            adverse_ttc_mult: 0.7,
            beta: BetaStress::default(),
            hazards: HazardPenalties::default(),
            kappa_speed: 0.5,
            kappa_gap: 10.0,
            n_alpha: 2,
            k_actors: 2,
            adjacent_radius: 30.0,
            comfort_accel_ref: 4.0,
            lane_change_comfort: 0.3,
            uncertainty: UncertaintyLevels::default(),
            margin_samples: 4,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let w = &self.weights;
        let t = &self.thresholds;
        if [w.ttc, w.front, w.rear, t.ttc, t.front, t.rear]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err("risk weights and thresholds must be positive");
        }
        let unit = |m: f64| m > 0.0 && m <= 1.0;
        if !unit(self.adverse_gap_mult) || !unit(self.adverse_ttc_mult) {
            return Err("adverse multipliers must lie in (0, 1]");
        }
        if Hazard::ALL.iter().any(|h| {
            let p = self.hazards.get(*h);
            !unit(p.gap_mult) || !unit(p.ttc_mult)
        }) {
            return Err("hazard multipliers must lie in (0, 1]");
        }
        if self.n_alpha < 1 {
            return Err("n_alpha must be at least 1");
        }
        if self.margin_samples < 1 || !(self.comfort_accel_ref > 0.0) {
            return Err("margin_samples and comfort_accel_ref must be positive");
        }
        Ok(())
    }
}

/// Collision-risk proxy: `min{1, Σ_k w_k [τ_k - x_k]_+ / τ_k}` over
/// `x = (T_min, g_f, g_r)`.
pub fn collision_risk(min_ttc: f64, front_gap: f64, rear_gap: f64, cfg: &RiskConfig) -> f64 {
    let hinge = |tau: f64, x: f64| (tau - x).max(0.0) / tau;
    let w = &cfg.weights;
    let t = &cfg.thresholds;
    let sum = w.ttc * hinge(t.ttc, min_ttc)
        + w.front * hinge(t.front, front_gap)
        + w.rear * hinge(t.rear, rear_gap);
    sum.min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldLineBranch {
    pub branch_id: String,
    pub role: Role,
    pub variant: Variant,
    pub action: CandidateAction,
    /// Rollout horizon (s).
    pub horizon: f64,
    pub predicted_lane: usize,
    pub predicted_speed: f64,
    pub predicted_progress: f64,
    pub front_gap: f64,
    pub rear_gap: f64,
    pub min_ttc: f64,
    pub collision_risk: f64,
    pub comfort_penalty: f64,
    pub uncertainty: f64,
    pub role_tags: Vec<String>,
    pub hazard_tags: Vec<Hazard>,
    pub critical_actor_id: Option<u32>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    pub step: usize,
    pub horizon: f64,
    pub branches: Vec<WorldLineBranch>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub front_gap: f64,
    pub rear_gap: f64,
    pub min_ttc: f64,
}

/// Longitudinal motion of one neighbour relative to the ego's start position.
#[derive(Debug, Clone, Copy)]
enum Motion {
    Constant { pos: f64, speed: f64 },
    Braking { pos: f64, speed: f64, decel: f64 },
}

impl Motion {
    fn at(self, t: f64) -> (f64, f64) {
        match self {
            Motion::Constant { pos, speed } => (pos + speed * t, speed),
            Motion::Braking { pos, speed, decel } => kinematics(pos, speed, -decel, t),
        }
    }
}

/// Constant-acceleration motion that stops at zero speed instead of reversing.
fn kinematics(pos: f64, speed: f64, accel: f64, t: f64) -> (f64, f64) {
    if accel < 0.0 && speed + accel * t < 0.0 {
        (pos + speed * speed / (2.0 * -accel), 0.0)
    } else {
        (pos + speed * t + 0.5 * accel * t * t, speed + accel * t)
    }
}

/// Gaps and TTC sampled at `samples + 1` evenly spaced times over `[0, H]`.
/// A vehicle whose relative position changes sign between samples was driven
/// through, which pins the corresponding gap and the TTC to zero.
fn lane_margins(
    others: &[Motion],
    ego_speed: f64,
    ego_accel: f64,
    horizon: f64,
    vehicle_length: f64,
    sentinel: f64,
    samples: usize,
) -> Margins {
    let mut m = Margins {
        front_gap: sentinel,
        rear_gap: sentinel,
        min_ttc: sentinel,
    };
    for motion in others {
        let mut prev_ahead = None;
        for j in 0..=samples {
            let t = horizon * j as f64 / samples as f64;
            let (pe, ve) = kinematics(0.0, ego_speed, ego_accel, t);
            let (po, vo) = motion.at(t);
            let dx = po - pe;
            let gap = (libm::fabs(dx) - vehicle_length).max(0.0);
            let ahead = dx >= 0.0;
            let closing = if ahead {
                m.front_gap = m.front_gap.min(gap);
                ve - vo
            } else {
                m.rear_gap = m.rear_gap.min(gap);
                vo - ve
            };
            if libm::fabs(dx) <= vehicle_length {
                // Bodies overlap longitudinally: contact, whatever the speeds.
                m.min_ttc = 0.0;
            } else if closing > 0.0 {
                m.min_ttc = m.min_ttc.min(gap / closing);
            }
            if let Some(was_ahead) = prev_ahead {
                if was_ahead != ahead {
                    if was_ahead {
                        m.front_gap = 0.0;
                    } else {
                        m.rear_gap = 0.0;
                    }
                    m.min_ttc = 0.0;
                }
            }
            prev_ahead = Some(ahead);
        }
    }
    m
}

fn action_lane(state: &CompactState, a: &CandidateAction) -> usize {
    a.target_lane.unwrap_or(state.ego.lane)
}

fn motions_in_lane(
    state: &CompactState,
    lane: usize,
    stressed: Option<(u32, Motion)>,
) -> Vec<Motion> {
    state
        .neighbors
        .iter()
        .filter(|n| n.lane == lane)
        .map(|n| match stressed {
            Some((id, motion)) if id == n.id => motion,
            _ => Motion::Constant {
                pos: n.rel_position,
                speed: n.speed,
            },
        })
        .collect()
}

fn margins_for(
    state: &CompactState,
    a: &CandidateAction,
    horizon: f64,
    cfg: &RiskConfig,
    stressed: Option<(u32, Motion)>,
) -> Margins {
    lane_margins(
        &motions_in_lane(state, action_lane(state, a), stressed),
        state.ego.speed,
        a.accel_proxy,
        horizon,
        state.meta.vehicle_length,
        state.meta.sentinel,
        cfg.margin_samples,
    )
}

fn comfort_penalty(a: &CandidateAction, cfg: &RiskConfig) -> f64 {
    let lc = if a.token.is_lane_change() {
        cfg.lane_change_comfort
    } else {
        0.0
    };
    libm::fabs(a.accel_proxy) / cfg.comfort_accel_ref + lc
}

struct BranchDraft<'a> {
    role: Role,
    variant: Variant,
    index: usize,
    margins: Margins,
    risk: f64,
    comfort: f64,
    uncertainty: f64,
    role_tags: Vec<String>,
    hazard_tags: Vec<Hazard>,
    critical_actor_id: Option<u32>,
    base: &'a Rollout,
}

/// Ego kinematics shared by every branch of one action.
struct Rollout {
    action: CandidateAction,
    horizon: f64,
    lane: usize,
    speed: f64,
    progress: f64,
}

impl Rollout {
    fn new(state: &CompactState, a: &CandidateAction, horizon: f64) -> Self {
        let v = state.ego.speed;
        let u = a.accel_proxy;
        Rollout {
            action: a.clone(),
            horizon,
            lane: action_lane(state, a),
            speed: (v + u * horizon).max(0.0),
            progress: (v * horizon + 0.5 * u * horizon * horizon).max(0.0),
        }
    }
}

fn finish(d: BranchDraft<'_>) -> WorldLineBranch {
    let summary = format!(
        "{}/{}/g_f={:.1}/T_min={:.1}/risk={:.2}",
        d.role, d.base.action.token, d.margins.front_gap, d.margins.min_ttc, d.risk
    );
    WorldLineBranch {
        branch_id: format!("{}-{}-{}", d.role, d.base.action.action_id, d.index),
        role: d.role,
        variant: d.variant,
        action: d.base.action.clone(),
        horizon: d.base.horizon,
        predicted_lane: d.base.lane,
        predicted_speed: d.base.speed,
        predicted_progress: d.base.progress,
        front_gap: d.margins.front_gap,
        rear_gap: d.margins.rear_gap,
        min_ttc: d.margins.min_ttc,
        collision_risk: d.risk,
        comfort_penalty: d.comfort,
        uncertainty: d.uncertainty,
        role_tags: d.role_tags,
        hazard_tags: d.hazard_tags,
        critical_actor_id: d.critical_actor_id,
        summary,
    }
}

fn risk_of(m: &Margins, cfg: &RiskConfig) -> f64 {
    collision_risk(m.min_ttc, m.front_gap, m.rear_gap, cfg)
}

/// Nominal and adverse ego rollouts for one action (`n_alpha` branches).
pub fn rollout_alpha(
    state: &CompactState,
    a: &CandidateAction,
    horizon: f64,
    cfg: &RiskConfig,
) -> Vec<WorldLineBranch> {
    let base = Rollout::new(state, a, horizon);
    let nominal = margins_for(state, a, horizon, cfg, None);
    let comfort = comfort_penalty(a, cfg);
    (0..cfg.n_alpha)
        .map(|j| {
            let (margins, variant, uncertainty) = if j == 0 {
                (nominal, Variant::Nominal, cfg.uncertainty.alpha_nominal)
            } else {
                let gm = libm::pow(cfg.adverse_gap_mult, j as f64);
                let tm = libm::pow(cfg.adverse_ttc_mult, j as f64);
                (
                    Margins {
                        front_gap: nominal.front_gap * gm,
                        rear_gap: nominal.rear_gap * gm,
                        min_ttc: nominal.min_ttc * tm,
                    },
                    Variant::Adverse,
                    cfg.uncertainty.alpha_adverse,
                )
            };
            let tag = if j == 0 { "nominal" } else { "adverse" };
            finish(BranchDraft {
                role: Role::Alpha,
                variant,
                index: j,
                risk: risk_of(&margins, cfg),
                margins,
                comfort,
                uncertainty,
                role_tags: vec![String::from("alpha"), String::from(tag)],
                hazard_tags: Vec::new(),
                critical_actor_id: None,
                base: &base,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalActor {
    pub vehicle: NeighborVehicle,
    pub role: ActorRole,
    pub score: f64,
}

fn actor_role(state: &CompactState, a: &CandidateAction, n: &NeighborVehicle, cfg: &RiskConfig) -> Option<ActorRole> {
    let lane = action_lane(state, a);
    if n.lane == lane {
        Some(if n.rel_position >= 0.0 {
            ActorRole::FrontLead
        } else {
            ActorRole::RearVehicle
        })
    } else if n.lane.abs_diff(lane) == 1 && libm::fabs(n.rel_position) <= cfg.adjacent_radius {
        Some(ActorRole::AdjacentVehicle)
    } else {
        None
    }
}

/// Critical-actor score `1[role ≠ ∅] · (β1 |Δv| + β2 / max(g, 1))`.
pub fn critical_actor_score(
    state: &CompactState,
    a: &CandidateAction,
    n: &NeighborVehicle,
    cfg: &RiskConfig,
) -> f64 {
    match actor_role(state, a, n, cfg) {
        Some(_) => cfg.kappa_speed * libm::fabs(n.rel_speed) + cfg.kappa_gap / n.gap.max(1.0),
        None => 0.0,
    }
}

/// Top-`k` eligible neighbours by critical-actor score, ties broken by id.
pub fn rank_critical_actors(
    state: &CompactState,
    a: &CandidateAction,
    k: usize,
    cfg: &RiskConfig,
) -> Vec<CriticalActor> {
    let mut ranked: Vec<CriticalActor> = state
        .neighbors
        .iter()
        .filter_map(|n| {
            actor_role(state, a, n, cfg).map(|role| CriticalActor {
                vehicle: n.clone(),
                role,
                score: critical_actor_score(state, a, n, cfg),
            })
        })
        .collect();
    ranked.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then(x.vehicle.id.cmp(&y.vehicle.id))
    });
    ranked.truncate(k);
    ranked
}

/// One stressed branch per critical actor, each derived from the nominal
/// alpha rollout of `a`.
pub fn generate_beta(
    state: &CompactState,
    a: &CandidateAction,
    horizon: f64,
    actors: &[CriticalActor],
    cfg: &RiskConfig,
) -> Vec<WorldLineBranch> {
    let base = Rollout::new(state, a, horizon);
    let nominal = margins_for(state, a, horizon, cfg, None);
    let comfort = comfort_penalty(a, cfg);
    actors
        .iter()
        .enumerate()
        .map(|(i, actor)| {
            let n = &actor.vehicle;
            let stressed = match actor.role {
                ActorRole::FrontLead => {
                    let motion = Motion::Braking {
                        pos: n.rel_position,
                        speed: n.speed,
                        decel: cfg.beta.front_lead_decel,
                    };
                    margins_for(state, a, horizon, cfg, Some((n.id, motion)))
                }
                ActorRole::RearVehicle => {
                    let motion = Motion::Constant {
                        pos: n.rel_position,
                        speed: n.speed + cfg.beta.rear_closing_boost,
                    };
                    margins_for(state, a, horizon, cfg, Some((n.id, motion)))
                }
                ActorRole::AdjacentVehicle => {
                    let gap = cfg.beta.cut_in_gap_factor
                        * nominal.front_gap.min(n.gap.max(state.meta.vehicle_length));
                    let closing = state.ego.speed.max(base.speed) - n.speed;
                    let ttc = if closing > 0.0 {
                        gap / closing
                    } else {
                        state.meta.sentinel
                    };
                    Margins {
                        front_gap: gap,
                        rear_gap: nominal.rear_gap,
                        min_ttc: ttc,
                    }
                }
            };
            let margins = Margins {
                front_gap: stressed.front_gap.min(nominal.front_gap),
                rear_gap: stressed.rear_gap.min(nominal.rear_gap),
                min_ttc: stressed.min_ttc.min(nominal.min_ttc),
            };
            finish(BranchDraft {
                role: Role::Beta,
                variant: Variant::ActorStress,
                index: i,
                risk: risk_of(&margins, cfg),
                margins,
                comfort,
                uncertainty: cfg.uncertainty.beta,
                role_tags: vec![String::from("beta"), String::from(actor.role.name())],
                hazard_tags: Vec::new(),
                critical_actor_id: Some(n.id),
                base: &base,
            })
        })
        .collect()
}

/// Gamma branch for a given hazard.
pub fn gamma_branch(
    state: &CompactState,
    a: &CandidateAction,
    horizon: f64,
    hazard: Hazard,
    cfg: &RiskConfig,
) -> WorldLineBranch {
    let base = Rollout::new(state, a, horizon);
    let nominal = margins_for(state, a, horizon, cfg, None);
    let p = cfg.hazards.get(hazard);
    let mut margins = nominal;
    match p.gap_target {
        GapTarget::Front => margins.front_gap *= p.gap_mult,
        GapTarget::Rear => margins.rear_gap *= p.gap_mult,
    }
    margins.min_ttc *= p.ttc_mult;
    let risk = (risk_of(&margins, cfg) + p.risk_add).clamp(0.0, 1.0);
    finish(BranchDraft {
        role: Role::Gamma,
        variant: Variant::HazardStress,
        index: 0,
        margins,
        risk,
        comfort: (comfort_penalty(a, cfg) + p.comfort_add).max(0.0),
        uncertainty: (cfg.uncertainty.gamma + p.uncertainty_add).clamp(0.0, 1.0),
        role_tags: vec![String::from("gamma"), String::from(hazard.name())],
        hazard_tags: vec![hazard],
        critical_actor_id: None,
        base: &base,
    })
}

/// Draw one hazard from the closed pool and build its gamma branch.
pub fn generate_gamma<R: RngCore + ?Sized>(
    state: &CompactState,
    a: &CandidateAction,
    horizon: f64,
    rng: &mut R,
    cfg: &RiskConfig,
) -> WorldLineBranch {
    let hazard = Hazard::ALL[rng.random_range(0..Hazard::ALL.len())];
    gamma_branch(state, a, horizon, hazard, cfg)
}

/// Full role-typed branch set for the given actions. Actions are visited in
/// ascending id order and the rng is consumed once per action when gamma is enabled.
pub fn generate_all<R: RngCore + ?Sized>(
    state: &CompactState,
    actions: &[CandidateAction],
    horizon: f64,
    roles: RoleSet,
    rng: &mut R,
    cfg: &RiskConfig,
) -> BranchSet {
    let mut ordered: Vec<&CandidateAction> = actions.iter().collect();
    ordered.sort_by_key(|a| a.action_id);
    let mut branches = Vec::new();
    for a in ordered {
        branches.extend(rollout_alpha(state, a, horizon, cfg));
        if roles.beta {
            let actors = rank_critical_actors(state, a, cfg.k_actors, cfg);
            branches.extend(generate_beta(state, a, horizon, &actors, cfg));
        }
        if roles.gamma {
            branches.push(generate_gamma(state, a, horizon, rng, cfg));
        }
    }
    BranchSet {
        step: state.meta.step,
        horizon,
        branches,
    }
}
