//! Seeded kinematic highway: straight multi-lane road, IDM traffic that keeps
//! its lane, and an ego vehicle driven by discrete meta-actions.
//!
//! One decision advances `sim_hz / policy_hz` substeps. All floating-point
//! work runs in a fixed order so a `(seed, config, actions)` triple always
//! reproduces the same trajectory bit for bit.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::PrimitiveAction;
use crate::seed;

/// Intelligent Driver Model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 25.0,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            exponent: 4.0,
        }
    }
}

/// IDM acceleration for a follower at `speed` with optional `(gap, leader_speed)`.
/// The result is clamped to `[-max_brake, max_accel]`.
pub fn idm_acceleration(
    p: &IdmParams,
    speed: f64,
    desired_speed: f64,
    leader: Option<(f64, f64)>,
    max_brake: f64,
) -> f64 {
    let free = 1.0 - libm::pow(speed / desired_speed.max(0.1), p.exponent);
    let interaction = match leader {
        Some((gap, leader_speed)) => {
            let dv = speed - leader_speed;
            let desired_gap = p.min_gap
                + (speed * p.time_headway
                    + speed * dv / (2.0 * libm::sqrt(p.max_accel * p.comfort_decel)))
                .max(0.0);
            let s = gap.max(0.1);
            (desired_gap / s) * (desired_gap / s)
        }
        None => 0.0,
    };
    (p.max_accel * (free - interaction)).clamp(-max_brake, p.max_accel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedProfile {
    pub target_band_kmh: [f64; 2],
    pub reward_band_kmh: [f64; 2],
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            target_band_kmh: [0.0, 130.0],
            reward_band_kmh: [80.0, 130.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub lane_count: usize,
    pub traffic_count: usize,
    pub sim_hz: u32,
    pub policy_hz: u32,
    pub episode_steps: usize,
    pub lane_width: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub speed_profile: SpeedProfile,
    pub idm: IdmParams,
    /// Target-speed increment of FASTER/SLOWER (m/s).
    pub speed_step: f64,
    /// Top rung of the discrete target-speed ladder (m/s).
    pub speed_ladder_max: f64,
    pub ego_initial_speed: f64,
    /// Proportional gain of the ego speed tracker (1/s).
    pub ego_speed_gain: f64,
    pub ego_max_accel: f64,
    pub ego_max_brake: f64,
    pub traffic_max_brake: f64,
    /// Traffic desired speeds are drawn from `[idm.desired_speed - spread, idm.desired_speed]`.
    pub traffic_speed_spread: f64,
    pub spawn_ahead: f64,
    pub spawn_behind: f64,
    /// Minimum bumper-to-bumper gap between same-lane vehicles at spawn.
    pub min_spawn_gap: f64,
    pub spawn_attempts: u32,
    /// Reported for gaps/TTC when no vehicle is present or nothing closes.
    pub sentinel: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lane_count: 3,
            traffic_count: 20,
            sim_hz: 5,
            policy_hz: 1,
            episode_steps: 20,
            lane_width: 4.0,
            vehicle_length: 5.0,
            vehicle_width: 2.0,
            speed_profile: SpeedProfile::default(),
            idm: IdmParams::default(),
            speed_step: 5.0,
            speed_ladder_max: 30.0,
            ego_initial_speed: 25.0,
            ego_speed_gain: 1.0 / 0.6,
            ego_max_accel: 4.0,
            ego_max_brake: 6.0,
            traffic_max_brake: 8.0,
            traffic_speed_spread: 5.0,
            spawn_ahead: 300.0,
            spawn_behind: 60.0,
            min_spawn_gap: 10.0,
            spawn_attempts: 500,
            sentinel: 1000.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg| Err(SimError::InvalidConfig(msg));
        if self.lane_count < 2 {
            return bad("lane_count must be at least 2");
        }
        if self.sim_hz == 0 || self.policy_hz == 0 || !self.sim_hz.is_multiple_of(self.policy_hz) {
            return bad("sim_hz must be a positive multiple of policy_hz");
        }
        let physical = [
            self.lane_width,
            self.vehicle_length,
            self.vehicle_width,
            self.speed_step,
            self.speed_ladder_max,
            self.ego_speed_gain,
            self.ego_max_accel,
            self.ego_max_brake,
            self.traffic_max_brake,
            self.idm.desired_speed,
            self.idm.time_headway,
            self.idm.min_gap,
            self.idm.max_accel,
            self.idm.comfort_decel,
            self.idm.exponent,
            self.sentinel,
        ];
        if physical.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("physical quantities must be finite and positive");
        }
        if self.ego_speed_gain * self.dt() > 1.0 {
            return bad("ego_speed_gain * dt must not exceed 1 (tracker would overshoot)");
        }
        if !(self.ego_initial_speed >= 0.0 && self.ego_initial_speed <= self.speed_ceiling()) {
            return bad("ego_initial_speed must lie inside the target band");
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.sim_hz / self.policy_hz) as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim_hz as f64
    }

    /// Decision period in seconds.
    pub fn policy_period(&self) -> f64 {
        1.0 / self.policy_hz as f64
    }

    pub fn lane_center(&self, lane: usize) -> f64 {
        lane as f64 * self.lane_width
    }

    /// Highest reachable target speed (m/s): the ladder top clamped into the target band.
    pub fn speed_ceiling(&self) -> f64 {
        self.speed_ladder_max
            .min(self.speed_profile.target_band_kmh[1] / 3.6)
    }

    pub fn speed_floor(&self) -> f64 {
        (self.speed_profile.target_band_kmh[0] / 3.6).max(0.0)
    }

    fn nearest_lane(&self, lateral: f64) -> usize {
        let lane = libm::round(lateral / self.lane_width);
        (lane.max(0.0) as usize).min(self.lane_count - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    /// Lane whose centre line is closest to the ego's lateral position.
    pub lane: usize,
    pub target_lane: usize,
    pub position: f64,
    /// Lateral position (m); lane `l` is centred at `l * lane_width`.
    pub lateral: f64,
    pub speed: f64,
    pub target_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficVehicle {
    pub id: u32,
    pub lane: usize,
    pub position: f64,
    pub speed: f64,
    pub desired_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub step_index: usize,
    pub sim_time: f64,
    /// Episode seed; every stochastic stream in an episode is derived from it.
    pub seed: u64,
    pub ego: EgoState,
    pub traffic: Vec<TrafficVehicle>,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSnapshot {
    pub id: u32,
    pub lane: usize,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// Scene after one substep. The ego carries id 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub sim_time: f64,
    pub ego: VehicleSnapshot,
    pub traffic: Vec<VehicleSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub new_state: SimState,
    pub collision: bool,
    pub ego_speed_kmh: f64,
    pub trace: Vec<Snapshot>,
}

/// Gaps and minimum TTC seen by the ego in one lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneObservables {
    pub front_gap: f64,
    pub rear_gap: f64,
    pub min_ttc: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(&'static str),
    #[error("could only place {placed} of {requested} vehicles without overlap; traffic too dense")]
    SpawnFailed { placed: usize, requested: usize },
    #[error("action {0} is infeasible in the current lane")]
    Infeasible(PrimitiveAction),
    #[error("episode already ended in a collision")]
    AlreadyCollided,
}

pub fn init_episode(seed: u64, cfg: &EnvConfig) -> Result<SimState, SimError> {
    cfg.validate()?;
    let ego_lane = cfg.lane_count / 2;
    let ego = EgoState {
        lane: ego_lane,
        target_lane: ego_lane,
        position: 0.0,
        lateral: cfg.lane_center(ego_lane),
        speed: cfg.ego_initial_speed,
        target_speed: cfg.ego_initial_speed,
    };

    let mut rng = seed::rng(seed, seed::STREAM_SPAWN, 0);
    let mut traffic: Vec<TrafficVehicle> = Vec::with_capacity(cfg.traffic_count);
    let clear = |lane: usize, x: f64, traffic: &[TrafficVehicle]| {
        let spaced = |other: f64| libm::fabs(x - other) - cfg.vehicle_length >= cfg.min_spawn_gap;
        (lane != ego_lane || spaced(ego.position))
            && traffic
                .iter()
                .filter(|v| v.lane == lane)
                .all(|v| spaced(v.position))
    };
    for i in 0..cfg.traffic_count {
        let mut placed = None;
        for _ in 0..cfg.spawn_attempts {
            let lane = rng.random_range(0..cfg.lane_count);
            let x = rng.random_range(-cfg.spawn_behind..cfg.spawn_ahead);
            if clear(lane, x, &traffic) {
                placed = Some((lane, x));
                break;
            }
        }
        let Some((lane, position)) = placed else {
            return Err(SimError::SpawnFailed {
                placed: i,
                requested: cfg.traffic_count,
            });
        };
        let desired_speed = cfg.idm.desired_speed - cfg.traffic_speed_spread * rng.random::<f64>();
        traffic.push(TrafficVehicle {
            id: i as u32 + 1,
            lane,
            position,
            speed: desired_speed,
            desired_speed,
        });
    }

    Ok(SimState {
        step_index: 0,
        sim_time: 0.0,
        seed,
        ego,
        traffic,
        collided: false,
    })
}

/// Whether the ego body laterally overlaps vehicles centred in `lane`.
fn ego_occupies(state: &SimState, lane: usize, cfg: &EnvConfig) -> bool {
    libm::fabs(state.ego.lateral - cfg.lane_center(lane)) < cfg.vehicle_width
}

/// Nearest vehicle ahead of traffic vehicle `i` in its lane, as `(bumper gap, speed)`.
fn traffic_leader(state: &SimState, i: usize, cfg: &EnvConfig) -> Option<(f64, f64)> {
    let me = &state.traffic[i];
    let mut best: Option<(f64, f64)> = None;
    let mut consider = |x: f64, speed: f64| {
        let dx = x - me.position;
        if dx > 0.0 && best.is_none_or(|(d, _)| dx < d) {
            best = Some((dx, speed));
        }
    };
    for (j, other) in state.traffic.iter().enumerate() {
        if j != i && other.lane == me.lane {
            consider(other.position, other.speed);
        }
    }
    if ego_occupies(state, me.lane, cfg) {
        consider(state.ego.position, state.ego.speed);
    }
    best.map(|(dx, speed)| (dx - cfg.vehicle_length, speed))
}

fn overlaps_ego(state: &SimState, v: &TrafficVehicle, cfg: &EnvConfig) -> bool {
    libm::fabs(v.position - state.ego.position) < cfg.vehicle_length
        && libm::fabs(cfg.lane_center(v.lane) - state.ego.lateral) < cfg.vehicle_width
}

fn snapshot(state: &SimState, cfg: &EnvConfig) -> Snapshot {
    Snapshot {
        sim_time: state.sim_time,
        ego: VehicleSnapshot {
            id: 0,
            lane: state.ego.lane,
            x: state.ego.position,
            y: state.ego.lateral,
            speed: state.ego.speed,
        },
        traffic: state
            .traffic
            .iter()
            .map(|v| VehicleSnapshot {
                id: v.id,
                lane: v.lane,
                x: v.position,
                y: cfg.lane_center(v.lane),
                speed: v.speed,
            })
            .collect(),
    }
}

/// Apply one meta-action and advance one decision period.
pub fn step_decision(
    state: &SimState,
    action: PrimitiveAction,
    cfg: &EnvConfig,
) -> Result<StepOutcome, SimError> {
    if state.collided {
        return Err(SimError::AlreadyCollided);
    }
    let mut s = state.clone();
    match action {
        PrimitiveAction::LaneLeft | PrimitiveAction::LaneRight => {
            s.ego.target_lane = action
                .target_lane(s.ego.lane, cfg.lane_count)
                .ok_or(SimError::Infeasible(action))?;
        }
        PrimitiveAction::Faster => {
            s.ego.target_speed = (s.ego.target_speed + cfg.speed_step).min(cfg.speed_ceiling());
        }
        PrimitiveAction::Slower => {
            s.ego.target_speed = (s.ego.target_speed - cfg.speed_step).max(cfg.speed_floor());
        }
        PrimitiveAction::Idle => {}
    }

    let n = cfg.substeps();
    let dt = cfg.dt();
    let lateral_step = cfg.lane_width / n.saturating_sub(1).max(1) as f64;
    let mut collision = false;
    let mut trace = Vec::with_capacity(n);

    for _ in 0..n {
        let ego_accel = (cfg.ego_speed_gain * (s.ego.target_speed - s.ego.speed))
            .clamp(-cfg.ego_max_brake, cfg.ego_max_accel);
        let traffic_accel: Vec<f64> = (0..s.traffic.len())
            .map(|i| {
                let v = &s.traffic[i];
                idm_acceleration(
                    &cfg.idm,
                    v.speed,
                    v.desired_speed,
                    traffic_leader(&s, i, cfg),
                    cfg.traffic_max_brake,
                )
            })
            .collect();

        s.ego.speed = (s.ego.speed + ego_accel * dt).max(0.0);
        s.ego.position += s.ego.speed * dt;
        let dy = cfg.lane_center(s.ego.target_lane) - s.ego.lateral;
        s.ego.lateral += dy.clamp(-lateral_step, lateral_step);
        s.ego.lane = cfg.nearest_lane(s.ego.lateral);

        for (v, a) in s.traffic.iter_mut().zip(traffic_accel) {
            v.speed = (v.speed + a * dt).max(0.0);
            v.position += v.speed * dt;
        }
        s.sim_time += dt;

        if s.traffic.iter().any(|v| overlaps_ego(&s, v, cfg)) {
            collision = true;
        }
        trace.push(snapshot(&s, cfg));
    }

    s.step_index += 1;
    s.collided = s.collided || collision;
    let ego_speed_kmh = s.ego.speed * 3.6;
    Ok(StepOutcome {
        new_state: s,
        collision,
        ego_speed_kmh,
        trace,
    })
}

/// Bumper-to-bumper gaps to the nearest front/rear vehicle in `lane` and the
/// minimum time-to-collision over every closing ego/vehicle pair in that lane.
pub fn measure_observables(state: &SimState, lane: usize, cfg: &EnvConfig) -> LaneObservables {
    let mut obs = LaneObservables {
        front_gap: cfg.sentinel,
        rear_gap: cfg.sentinel,
        min_ttc: cfg.sentinel,
    };
    for v in state.traffic.iter().filter(|v| v.lane == lane) {
        let dx = v.position - state.ego.position;
        let gap = (libm::fabs(dx) - cfg.vehicle_length).max(0.0);
        let closing = if dx >= 0.0 {
            obs.front_gap = obs.front_gap.min(gap);
            state.ego.speed - v.speed
        } else {
            obs.rear_gap = obs.rear_gap.min(gap);
            v.speed - state.ego.speed
        };
        if closing > 0.0 {
            obs.min_ttc = obs.min_ttc.min(gap / closing);
        }
    }
    obs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_road(cfg: &EnvConfig) -> SimState {
        let mut c = cfg.clone();
        c.traffic_count = 0;
        init_episode(7, &c).unwrap()
    }

    fn vehicle(id: u32, lane: usize, position: f64, speed: f64) -> TrafficVehicle {
        TrafficVehicle {
            id,
            lane,
            position,
            speed,
            desired_speed: speed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = EnvConfig::default();
        let a = serde_json::to_string(&init_episode(7, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&init_episode(7, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&init_episode(8, &cfg).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_traffic_leaves_ego_alone() {
        let s = empty_road(&EnvConfig::default());
        assert!(s.traffic.is_empty());
        assert_eq!(s.ego.lane, 1);
        assert!(s.ego.speed > 0.0 && s.ego.speed <= 130.0 / 3.6);
    }

    #[test]
    fn spawn_gaps_respect_minimum() {
        let cfg = EnvConfig::default();
        for seed in 0..50 {
            let s = init_episode(seed, &cfg).unwrap();
            assert_eq!(s.traffic.len(), cfg.traffic_count);
            let mut all: Vec<(usize, f64)> = s.traffic.iter().map(|v| (v.lane, v.position)).collect();
            all.push((s.ego.lane, s.ego.position));
            for (i, a) in all.iter().enumerate() {
                for b in &all[i + 1..] {
                    if a.0 == b.0 {
                        let gap = libm::fabs(a.1 - b.1) - cfg.vehicle_length;
                        assert!(gap >= cfg.min_spawn_gap, "seed {seed}: gap {gap}");
                    }
                }
            }
        }
    }

    #[test]
    fn overcrowded_spawn_fails() {
        let cfg = EnvConfig {
            traffic_count: 200,
            spawn_attempts: 50,
            ..EnvConfig::default()
        };
        assert!(matches!(
            init_episode(1, &cfg),
            Err(SimError::SpawnFailed { requested: 200, .. })
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = EnvConfig::default();
        cfg.lane_count = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.sim_hz = 7;
        cfg.policy_hz = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default();
        cfg.vehicle_length = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn idle_on_empty_road_tracks_target() {
        let cfg = EnvConfig::default();
        let mut s = empty_road(&cfg);
        s.ego.speed = 20.0;
        s.ego.target_speed = 25.0;
        let mut last_err = 5.0;
        for _ in 0..5 {
            let out = step_decision(&s, PrimitiveAction::Idle, &cfg).unwrap();
            assert!(!out.collision);
            assert_eq!(out.trace.len(), cfg.substeps());
            assert_eq!(out.new_state.ego.lane, 1);
            let err = out.new_state.ego.target_speed - out.new_state.ego.speed;
            assert!(err >= 0.0 && err < last_err);
            last_err = err;
            s = out.new_state;
        }
        assert!(last_err < 0.5);
    }

    #[test]
    fn lane_change_completes_within_one_decision() {
        let cfg = EnvConfig::default();
        let s = empty_road(&cfg);
        let out = step_decision(&s, PrimitiveAction::LaneLeft, &cfg).unwrap();
        assert_eq!(out.new_state.ego.lane, 0);
        assert_eq!(out.new_state.ego.lateral, cfg.lane_center(0));
    }

    #[test]
    fn lane_left_from_leftmost_is_infeasible() {
        let cfg = EnvConfig::default();
        let mut s = empty_road(&cfg);
        s.ego.lane = 0;
        s.ego.target_lane = 0;
        s.ego.lateral = 0.0;
        assert_eq!(
            step_decision(&s, PrimitiveAction::LaneLeft, &cfg).unwrap_err(),
            SimError::Infeasible(PrimitiveAction::LaneLeft)
        );
    }

    #[test]
    fn faster_at_ceiling_clamps() {
        let cfg = EnvConfig::default();
        let mut s = empty_road(&cfg);
        s.ego.target_speed = 30.0;
        let out = step_decision(&s, PrimitiveAction::Faster, &cfg).unwrap();
        assert_eq!(out.new_state.ego.target_speed, 30.0);
        s.ego.target_speed = 0.0;
        let out = step_decision(&s, PrimitiveAction::Slower, &cfg).unwrap();
        assert_eq!(out.new_state.ego.target_speed, 0.0);
    }

    #[test]
    fn fast_ego_hits_slow_leader() {
        let cfg = EnvConfig::default();
        let mut s = empty_road(&cfg);
        s.ego.speed = 30.0;
        s.ego.target_speed = 30.0;
        // leader 3 m bumper-to-bumper ahead
        s.traffic.push(vehicle(1, 1, cfg.vehicle_length + 3.0, 10.0));
        let out = step_decision(&s, PrimitiveAction::Faster, &cfg).unwrap();
        assert!(out.collision);
        assert!(out.new_state.collided);
        assert_eq!(
            step_decision(&out.new_state, PrimitiveAction::Idle, &cfg).unwrap_err(),
            SimError::AlreadyCollided
        );
    }

    #[test]
    fn observables_on_empty_lane_are_sentinels() {
        let cfg = EnvConfig::default();
        let s = empty_road(&cfg);
        let o = measure_observables(&s, 1, &cfg);
        assert_eq!((o.front_gap, o.rear_gap, o.min_ttc), (1000.0, 1000.0, 1000.0));
    }

    #[test]
    fn observables_equal_speed_no_ttc() {
        let cfg = EnvConfig::default();
        let mut s = empty_road(&cfg);
        s.traffic.push(vehicle(1, 1, 20.0, s.ego.speed));
        let o = measure_observables(&s, 1, &cfg);
        assert_eq!(o.front_gap, 20.0 - cfg.vehicle_length);
        assert_eq!(o.min_ttc, 1000.0);
        assert_eq!(o.rear_gap, 1000.0);
    }

    #[test]
    fn observables_closing_ttc() {
        let cfg = EnvConfig::default();
        let mut s = empty_road(&cfg);
        s.ego.speed = 28.0;
        s.traffic.push(vehicle(1, 1, 24.0 + cfg.vehicle_length, 20.0));
        let o = measure_observables(&s, 1, &cfg);
        assert_eq!(o.front_gap, 24.0);
        assert!((o.min_ttc - 3.0).abs() < 1e-12);

        // Independent check: extrapolate both vehicles at constant speed in
        // fine substeps until the gap closes.
        let (mut xe, mut xf, mut t) = (0.0f64, 24.0 + cfg.vehicle_length, 0.0f64);
        let h = 1e-4;
        while xf - xe - cfg.vehicle_length > 0.0 {
            xe += 28.0 * h;
            xf += 20.0 * h;
            t += h;
        }
        assert!((t - o.min_ttc).abs() < 1e-3);
    }

    #[test]
    fn rear_closer_counts_in_ttc() {
        let cfg = EnvConfig::default();
        let mut s = empty_road(&cfg);
        s.ego.speed = 20.0;
        s.traffic.push(vehicle(1, 1, -15.0, 25.0));
        let o = measure_observables(&s, 1, &cfg);
        assert_eq!(o.rear_gap, 10.0);
        assert!((o.min_ttc - 2.0).abs() < 1e-12);
    }

    #[test]
    fn idm_behaviour() {
        let p = IdmParams::default();
        // free road, below desired speed: accelerate
        assert!(idm_acceleration(&p, 20.0, 25.0, None, 8.0) > 0.0);
        // at desired speed: zero
        assert!(idm_acceleration(&p, 25.0, 25.0, None, 8.0).abs() < 1e-12);
        // close slow leader: brake, clamped
        assert_eq!(idm_acceleration(&p, 25.0, 25.0, Some((1.0, 5.0)), 8.0), -8.0);
    }
}
