//! Random scenes, execution buffers and observables for property checks
//! and acceptance runs.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::action::{PrimitiveAction, SafetyFloor};
use crate::arbiter::{observe, DriftConfig, ExecStatus, Expected, WorldlineExecutionState};
use crate::contract::{
    Authority, CommitFamily, Comparator, ConditionAtom, ForecastContract, Metric, RuntimeObservables, MAX_ATOMS,
};
use crate::encoder::{CompactState, EgoSummary, NeighborVehicle, StateMeta};

const LANES: usize = 3;
const LENGTH: f64 = 5.0;
const SENTINEL: f64 = 1000.0;

/// A random three-lane scene with up to `max_neighbors` vehicles, encoded the
/// same way [`encode_state`](crate::encoder::encode_state) would encode it.
pub fn random_compact_state<R: RngCore + ?Sized>(rng: &mut R, max_neighbors: usize) -> CompactState {
    let lane = rng.random_range(0..LANES);
    let speed = rng.random_range(0.0..30.0);
    let count = rng.random_range(0..=max_neighbors);
    let mut neighbors: Vec<NeighborVehicle> = (0..count)
        .map(|i| {
            let rel: f64 = rng.random_range(-80.0..120.0);
            let v: f64 = rng.random_range(0.0..33.0);
            NeighborVehicle {
                id: i as u32 + 1,
                lane: rng.random_range(0..LANES),
                rel_position: rel,
                rel_speed: v - speed,
                gap: (libm::fabs(rel) - LENGTH).max(0.0),
                speed: v,
            }
        })
        .collect();
    neighbors.sort_by(|a, b| {
        libm::fabs(a.rel_position)
            .total_cmp(&libm::fabs(b.rel_position))
            .then(a.id.cmp(&b.id))
    });

    let feasible = PrimitiveAction::ALL
        .into_iter()
        .filter(|a| a.target_lane(lane, LANES).is_some())
        .collect();
    let (front_gap, min_ttc) = current_lane_margins(&neighbors, lane, speed);
    let fallback = if SafetyFloor::default().is_breached(front_gap, min_ttc) {
        PrimitiveAction::Slower
    } else {
        PrimitiveAction::Idle
    };

    CompactState {
        ego: EgoSummary {
            lane,
            speed,
            position: 0.0,
            target_speed: libm::round(speed / 5.0) * 5.0,
        },
        neighbors,
        meta: StateMeta {
            lane_count: LANES,
            feasible,
            fallback,
            step: rng.random_range(0..20),
            speed_band: [0.0, 30.0],
            vehicle_length: LENGTH,
            sentinel: SENTINEL,
        },
    }
}

fn current_lane_margins(neighbors: &[NeighborVehicle], lane: usize, speed: f64) -> (f64, f64) {
    let mut front = SENTINEL;
    let mut ttc = SENTINEL;
    for n in neighbors.iter().filter(|n| n.lane == lane) {
        let closing = if n.rel_position >= 0.0 {
            front = front.min(n.gap);
            speed - n.speed
        } else {
            n.speed - speed
        };
        if closing > 0.0 {
            ttc = ttc.min(n.gap / closing);
        }
    }
    (front, ttc)
}

fn random_atom<R: RngCore + ?Sized>(rng: &mut R) -> ConditionAtom {
    let metric = Metric::ALL[rng.random_range(0..Metric::ALL.len())];
    let cmp = Comparator::ALL[rng.random_range(0..Comparator::ALL.len())];
    let threshold = match metric {
        Metric::FrontGap => rng.random_range(0.0..40.0),
        Metric::MinTtc => rng.random_range(0.0..8.0),
        Metric::DriftScore => rng.random_range(0.0..=1.0),
    };
    ConditionAtom::new(metric, cmp, threshold).expect("generated thresholds are in range")
}

fn pick<R: RngCore + ?Sized, T: Copy>(rng: &mut R, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// A random execution buffer for `state`: sometimes empty, otherwise a
/// forecast with random atoms, horizon, progress, authority and status.
pub fn random_execution<R: RngCore + ?Sized>(rng: &mut R, state: &CompactState) -> WorldlineExecutionState {
    if rng.random_bool(0.15) {
        return WorldlineExecutionState::default();
    }
    let action = pick(rng, &state.meta.feasible);
    let commit_family = if rng.random_bool(0.9) {
        CommitFamily::for_action(action)
    } else {
        pick(rng, &CommitFamily::ALL)
    };
    let horizon_steps = rng.random_range(1..=12);
    let validity = (0..rng.random_range(0..=MAX_ATOMS)).map(|_| random_atom(rng)).collect();
    let abort = (0..rng.random_range(0..=MAX_ATOMS)).map(|_| random_atom(rng)).collect();
    let status = pick(
        rng,
        &[
            ExecStatus::Active,
            ExecStatus::Active,
            ExecStatus::Active,
            ExecStatus::Softened,
            ExecStatus::Expired,
            ExecStatus::Aborted,
            ExecStatus::Overridden,
        ],
    );
    WorldlineExecutionState {
        forecast: Some(ForecastContract {
            branch_id: String::from("alpha-1-0"),
            action,
            commit_family,
            horizon_steps,
            validity,
            abort,
            fallback: pick(rng, &state.meta.feasible),
            authority: pick(rng, &Authority::ALL),
            issue_step: rng.random_range(0..20),
        }),
        expected: Some(Expected {
            front_gap: rng.random_range(0.0..100.0),
            min_ttc: rng.random_range(0.0..20.0),
            lane: rng.random_range(0..state.meta.lane_count),
            speed: rng.random_range(0.0..35.0),
        }),
        steps_executed: rng.random_range(0..=horizon_steps),
        status,
        refresh_pending: rng.random_bool(0.1),
    }
}

/// Random observables consistent with `exec` (drift filled in from it).
pub fn random_observables<R: RngCore + ?Sized>(
    rng: &mut R,
    exec: &WorldlineExecutionState,
    state: &CompactState,
    cfg: &DriftConfig,
) -> RuntimeObservables {
    let front_gap = if rng.random_bool(0.1) {
        SENTINEL
    } else {
        rng.random_range(0.0..60.0)
    };
    let min_ttc = if rng.random_bool(0.2) {
        SENTINEL
    } else {
        rng.random_range(0.0..15.0)
    };
    let lane = rng.random_range(0..state.meta.lane_count);
    let step = match &exec.forecast {
        Some(c) => c.issue_step + rng.random_range(0..c.horizon_steps + 2),
        None => rng.random_range(0..20),
    };
    observe(exec, front_gap, min_ttc, lane, step, cfg)
}
