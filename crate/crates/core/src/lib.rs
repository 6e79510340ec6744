//! Latency-decoupled planner runtime for highway driving.
//!
//! A slow strategic selector picks one of a bounded set of role-typed
//! world lines (`alpha` nominal rollouts, `beta` critical-actor stress,
//! `gamma` hazard stress). The pick becomes a typed, revocable
//! [`StrategicForecast`](contract::StrategicForecast), and a fast runtime
//! arbiter reuses it only while its validity/abort atoms, drift budget and
//! horizon still hold.
//!
//! The crate is `no_std` + `alloc`. Everything that touches the outside
//! world (files, HTTP, wall clocks) lives in the companion `worldline` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod action;
pub mod arbiter;
pub mod contract;
pub mod encoder;
pub mod episode;
pub mod metrics;
pub mod scenario;
pub mod scoring;
pub mod seed;
pub mod selector;
pub mod sim;
pub mod worldline;

pub use action::{PrimitiveAction, SafetyFloor};
pub use arbiter::{
    arbitrate, check_invalid, drift_score, DecisionProvenance, DriftConfig, InvalidationReason,
    TacticalDecision, WorldlineExecutionState,
};
pub use contract::{
    parse_atom, validate_forecast, ConditionAtom, ParserFallback, RuntimeObservables,
    StrategicForecast,
};
pub use encoder::{encode_state, feasible_actions, CandidateAction, CompactState, EncoderConfig};
pub use episode::{run_episode, EpisodeRecord, Mode, RunConfig};
pub use metrics::{effective_lag, summarize, wilson_interval, MetricsSummary};
pub use scoring::{order_branches, score_branch, shortlist, PrunedBranch, ScoringConfig};
pub use sim::{init_episode, measure_observables, step_decision, EnvConfig, SimState, StepOutcome};
pub use worldline::{collision_risk, generate_all, BranchSet, RiskConfig, RoleSet, WorldLineBranch};
