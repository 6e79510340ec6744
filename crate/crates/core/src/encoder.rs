//! Compact planner state `(ego, neighbours, meta)` and the feasible
//! candidate-action set, extracted from a live [`SimState`].

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::action::{PrimitiveAction, SafetyFloor};
use crate::sim::{measure_observables, EnvConfig, SimState};

/// Constant-acceleration proxies (m/s²) used only for short-horizon rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccelProxies {
    pub faster: f64,
    pub slower: f64,
    pub idle: f64,
    pub lane_change: f64,
}

impl Default for AccelProxies {
    fn default() -> Self {
        Self {
            faster: 2.0,
            slower: -2.0,
            idle: 0.0,
            lane_change: 0.0,
        }
    }
}

impl AccelProxies {
    pub fn for_action(&self, action: PrimitiveAction) -> f64 {
        match action {
            PrimitiveAction::Faster => self.faster,
            PrimitiveAction::Slower => self.slower,
            PrimitiveAction::Idle => self.idle,
            PrimitiveAction::LaneLeft | PrimitiveAction::LaneRight => self.lane_change,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub retain_n: usize,
    pub accel: AccelProxies,
    pub floor: SafetyFloor,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            retain_n: 6,
            accel: AccelProxies::default(),
            floor: SafetyFloor::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSummary {
    pub lane: usize,
    pub speed: f64,
    pub position: f64,
    pub target_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborVehicle {
    pub id: u32,
    pub lane: usize,
    /// Signed longitudinal offset from the ego (+ ahead).
    pub rel_position: f64,
    /// Neighbour speed minus ego speed.
    pub rel_speed: f64,
    /// Bumper-to-bumper distance, `max(0, |rel_position| - vehicle_length)`.
    pub gap: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMeta {
    pub lane_count: usize,
    pub feasible: Vec<PrimitiveAction>,
    pub fallback: PrimitiveAction,
    pub step: usize,
    /// Reachable target-speed band (m/s).
    pub speed_band: [f64; 2],
    pub vehicle_length: f64,
    /// Value reported for absent vehicles / non-closing pairs.
    pub sentinel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactState {
    pub ego: EgoSummary,
    pub neighbors: Vec<NeighborVehicle>,
    pub meta: StateMeta,
}

impl CompactState {
    pub fn is_feasible(&self, action: PrimitiveAction) -> bool {
        self.meta.feasible.contains(&action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAction {
    pub action_id: u8,
    pub token: PrimitiveAction,
    pub target_lane: Option<usize>,
    pub accel_proxy: f64,
}

pub fn encode_state(sim: &SimState, env: &EnvConfig, cfg: &EncoderConfig) -> CompactState {
    let ego = &sim.ego;
    let mut neighbors: Vec<NeighborVehicle> = sim
        .traffic
        .iter()
        .map(|v| {
            let rel_position = v.position - ego.position;
            NeighborVehicle {
                id: v.id,
                lane: v.lane,
                rel_position,
                rel_speed: v.speed - ego.speed,
                gap: (libm::fabs(rel_position) - env.vehicle_length).max(0.0),
                speed: v.speed,
            }
        })
        .collect();
    neighbors.sort_by(|a, b| {
        libm::fabs(a.rel_position)
            .total_cmp(&libm::fabs(b.rel_position))
            .then(a.id.cmp(&b.id))
    });
    neighbors.truncate(cfg.retain_n);

    let feasible: Vec<PrimitiveAction> = PrimitiveAction::ALL
        .into_iter()
        .filter(|a| a.target_lane(ego.lane, env.lane_count).is_some())
        .collect();

    let here = measure_observables(sim, ego.lane, env);
    let fallback = if cfg.floor.is_breached(here.front_gap, here.min_ttc) {
        PrimitiveAction::Slower
    } else {
        PrimitiveAction::Idle
    };

    CompactState {
        ego: EgoSummary {
            lane: ego.lane,
            speed: ego.speed,
            position: ego.position,
            target_speed: ego.target_speed,
        },
        neighbors,
        meta: StateMeta {
            lane_count: env.lane_count,
            feasible,
            fallback,
            step: sim.step_index,
            speed_band: [env.speed_floor(), env.speed_ceiling()],
            vehicle_length: env.vehicle_length,
            sentinel: env.sentinel,
        },
    }
}

pub fn feasible_actions(state: &CompactState, accel: &AccelProxies) -> Vec<CandidateAction> {
    let mut out: Vec<CandidateAction> = state
        .meta
        .feasible
        .iter()
        .map(|&a| CandidateAction {
            action_id: a.id(),
            token: a,
            target_lane: if a.is_lane_change() {
                a.target_lane(state.ego.lane, state.meta.lane_count)
            } else {
                None
            },
            accel_proxy: accel.for_action(a),
        })
        .collect();
    out.sort_by_key(|c| c.action_id);
    out
}
