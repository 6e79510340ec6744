//! Strategic branch selection and runtime decision sources.
//!
//! Selectors see a [`PromptBundle`] and the shortlist and return a
//! [`SelectorResult`]. Scripted selectors render their choice into the same
//! JSON template a live endpoint would use and push it through the strict
//! parser, so every strategic path shares one validation route.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{PrimitiveAction, SafetyFloor};
use crate::arbiter::{
    DecisionProvenance, TacticalDecision, WorldlineExecutionState, TAG_RUNTIME_CHOICE,
};
use crate::contract::{
    parse_forecast_response, Authority, CommitFamily, ConditionAtom, Comparator, ForecastContract,
    Metric, ParserFallback, RationaleTag, RawForecast, RuntimeObservables, StrategicForecast,
    ValidationContext,
};
use crate::encoder::CompactState;
use crate::scoring::PrunedBranch;
use crate::seed;
use crate::worldline::{Role, RoleSet};

pub const STRATEGIC_SYSTEM: &str = include_str!("../assets/strategic_system_v1.txt");
pub const RUNTIME_SYSTEM: &str = include_str!("../assets/runtime_system_v1.txt");
pub const BALANCED_BLOCK: &str = include_str!("../assets/balanced_block_v1.txt");
pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    #[default]
    Natural,
    Balanced,
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural" => Ok(PromptMode::Natural),
            "balanced" => Ok(PromptMode::Balanced),
            other => Err(format!("unknown prompt mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub mode: PromptMode,
    pub role_priority: Vec<Role>,
    pub step: usize,
    pub hash: String,
}

/// First 16 hex characters of SHA-256 over `system`, a blank line, and `user`.
pub fn prompt_hash(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update(b"\n\n");
    h.update(user.as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(16);
    for b in digest.iter().take(8) {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Enabled roles in `(alpha, beta, gamma)` order rotated left by `step`.
pub fn role_priority(roles: RoleSet, step: usize) -> Vec<Role> {
    let mut r = roles.enabled();
    let n = r.len();
    r.rotate_left(step % n);
    r
}

fn response_template(max_horizon: usize) -> String {
    format!(
        "{{\"branch_id\": \"<shortlisted id>\", \"action\": \"<primitive action>\", \
         \"commit_family\": \"<KEEP|ACCELERATE|CHANGE_LEFT|CHANGE_RIGHT|DECELERATE>\", \
         \"horizon_steps\": <1..{max_horizon}>, \"validity\": [\"front_gap_ge:4.0\"], \
         \"abort\": [\"min_ttc_lt:2.0\"], \"fallback\": \"<primitive action>\", \
         \"authority\": \"<low|med|high>\", \"rationale_tags\": [\"safety_margin\"]}}"
    )
}

fn scene_lines(state: &CompactState, out: &mut String) {
    let e = &state.ego;
    let _ = writeln!(
        out,
        "ego: lane={} speed={:.2} target_speed={:.1} lanes={}",
        e.lane, e.speed, e.target_speed, state.meta.lane_count
    );
    for n in &state.neighbors {
        let _ = writeln!(
            out,
            "vehicle id={} lane={} rel_x={:.1} rel_v={:.2} gap={:.1}",
            n.id, n.lane, n.rel_position, n.rel_speed, n.gap
        );
    }
    let feasible: Vec<&str> = state.meta.feasible.iter().map(|a| a.token()).collect();
    let _ = writeln!(
        out,
        "feasible: {}\nfallback: {}",
        feasible.join(","),
        state.meta.fallback.token()
    );
}

pub fn build_strategic_prompt(
    shortlist: &[PrunedBranch],
    state: &CompactState,
    mode: PromptMode,
    roles: RoleSet,
    step: usize,
    max_horizon: usize,
) -> PromptBundle {
    let mut user = String::new();
    let role_priority = match mode {
        PromptMode::Balanced => {
            user.push_str(BALANCED_BLOCK.trim_end());
            user.push_str("\n\n");
            role_priority(roles, step)
        }
        PromptMode::Natural => Vec::new(),
    };
    let _ = writeln!(user, "step: {step}");
    scene_lines(state, &mut user);
    user.push_str("shortlist:\n");
    for p in shortlist {
        let _ = writeln!(
            user,
            "- id={} role={} action={} s_agg={:.4} q_saf={:.4} summary={}",
            p.branch.branch_id,
            p.branch.role,
            p.branch.action.token.token(),
            p.s_agg,
            p.q_saf,
            p.branch.summary
        );
    }
    if !role_priority.is_empty() {
        let names: Vec<&str> = role_priority.iter().map(|r| r.name()).collect();
        let _ = writeln!(user, "role_priority: {}", names.join(","));
    }
    let _ = writeln!(user, "max_horizon_steps: {max_horizon}");
    let _ = write!(user, "response_template: {}", response_template(max_horizon));
    let system = STRATEGIC_SYSTEM.trim_end().to_owned();
    let hash = prompt_hash(&system, &user);
    PromptBundle {
        system,
        user,
        mode,
        role_priority,
        step,
        hash,
    }
}

/// Runtime prompt: active contract (never its provenance), live scene,
/// authority, validity status and the arbiter's proposal.
pub fn build_runtime_prompt(
    state: &CompactState,
    contract: Option<&ForecastContract>,
    obs: &RuntimeObservables,
    base: &TacticalDecision,
) -> PromptBundle {
    let mut user = String::new();
    let _ = writeln!(user, "step: {}", obs.step);
    scene_lines(state, &mut user);
    let _ = writeln!(
        user,
        "observed: front_gap={:.1} min_ttc={:.2} drift={:.3} lane={}",
        obs.front_gap, obs.min_ttc, obs.drift_score, obs.lane
    );
    match contract {
        Some(c) => {
            let atoms = |v: &[ConditionAtom]| {
                v.iter().map(|a| format!("{a}")).collect::<Vec<_>>().join(",")
            };
            let _ = writeln!(
                user,
                "forecast: branch={} action={} family={} horizon={} issued={} authority={}",
                c.branch_id,
                c.action.token(),
                c.commit_family.name(),
                c.horizon_steps,
                c.issue_step,
                c.authority.name()
            );
            let _ = writeln!(
                user,
                "validity: [{}] holds={}\nabort: [{}] fires={}",
                atoms(&c.validity),
                c.validity_holds(obs),
                atoms(&c.abort),
                c.abort_fires(obs)
            );
        }
        None => user.push_str("forecast: none\n"),
    }
    let _ = write!(
        user,
        "arbiter_proposal: {} ({})",
        base.action.token(),
        base.provenance.name()
    );
    let system = RUNTIME_SYSTEM.trim_end().to_owned();
    let hash = prompt_hash(&system, &user);
    PromptBundle {
        system,
        user,
        mode: PromptMode::Natural,
        role_priority: Vec::new(),
        step: obs.step,
        hash,
    }
}

/// Per-call latency stand-in for selectors that do not measure wall time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LatencyModel {
    Constant { seconds: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl LatencyModel {
    pub fn sample(&self, seed: u64, stream: u64, index: u64) -> f64 {
        match *self {
            LatencyModel::Constant { seconds } => seconds,
            LatencyModel::Uniform { lo, hi } => {
                if hi <= lo {
                    lo
                } else {
                    seed::rng(seed, stream, index).random_range(lo..hi)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let ok = match *self {
            LatencyModel::Constant { seconds } => seconds.is_finite() && seconds >= 0.0,
            LatencyModel::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err("latencies must be finite and non-negative")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorResult {
    pub outcome: Result<StrategicForecast, ParserFallback>,
    /// Measured seconds, or `None` when the caller should apply its synthetic model.
    pub latency_s: Option<f64>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub raw_response: String,
}

/// Constants of the contract attached to non-LLM selections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractDefaults {
    /// Validity atoms require `front_gap > gap_floor * margin` and `min_ttc > ttc_floor * margin`.
    pub floor_margin: f64,
    pub abort_ttc: f64,
    pub authority: Authority,
}

impl Default for ContractDefaults {
    fn default() -> Self {
        Self {
            floor_margin: 2.0,
            abort_ttc: 2.0,
            authority: Authority::Med,
        }
    }
}

/// Everything a strategic selector may look at for one call.
#[derive(Debug, Clone, Copy)]
pub struct StrategicRequest<'a> {
    pub prompt: &'a PromptBundle,
    pub shortlist: &'a [PrunedBranch],
    pub state: &'a CompactState,
    pub ctx: ValidationContext<'a>,
    pub defaults: &'a ContractDefaults,
    pub floor: &'a SafetyFloor,
}

pub trait StrategicSelector {
    fn id(&self) -> &str;
    fn select(&mut self, req: &StrategicRequest<'_>) -> SelectorResult;
}

fn default_tags(role: Role) -> Vec<RationaleTag> {
    match role {
        Role::Alpha => vec![RationaleTag::SafetyMargin, RationaleTag::Progress],
        Role::Beta | Role::Gamma => vec![RationaleTag::SafetyMargin, RationaleTag::StressHedge],
    }
}

/// The default contract around a chosen shortlist member.
pub fn default_raw_forecast(chosen: &PrunedBranch, req: &StrategicRequest<'_>) -> RawForecast {
    let d = req.defaults;
    let atom = |m, c, t| ConditionAtom::new(m, c, t).expect("default thresholds are non-negative");
    let contract = ForecastContract {
        branch_id: chosen.branch.branch_id.clone(),
        action: chosen.branch.action.token,
        commit_family: CommitFamily::for_action(chosen.branch.action.token),
        horizon_steps: req.ctx.max_horizon,
        validity: vec![
            atom(Metric::FrontGap, Comparator::Ge, req.floor.gap_floor * d.floor_margin),
            atom(Metric::MinTtc, Comparator::Gt, req.floor.ttc_floor * d.floor_margin),
        ],
        abort: vec![atom(Metric::MinTtc, Comparator::Lt, d.abort_ttc)],
        fallback: req.state.meta.fallback,
        authority: d.authority,
        issue_step: req.ctx.step,
    };
    RawForecast::from_contract(&contract, &default_tags(chosen.branch.role))
}

fn commit_choice(chosen: &PrunedBranch, req: &StrategicRequest<'_>) -> SelectorResult {
    let raw = default_raw_forecast(chosen, req);
    let text = serde_json::to_string(&raw).expect("raw forecast serializes");
    SelectorResult {
        outcome: parse_forecast_response(&text, &req.ctx),
        latency_s: None,
        prompt_tokens: None,
        completion_tokens: None,
        raw_response: text,
    }
}

/// Commit the rank-1 shortlist member with the default contract.
pub fn select_analytical_top(req: &StrategicRequest<'_>) -> SelectorResult {
    match req.shortlist.first() {
        Some(top) => commit_choice(top, req),
        None => SelectorResult {
            outcome: Err(ParserFallback::Unavailable("empty shortlist".into())),
            latency_s: None,
            prompt_tokens: None,
            completion_tokens: None,
            raw_response: String::new(),
        },
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticalTop;

impl StrategicSelector for AnalyticalTop {
    fn id(&self) -> &str {
        "analytical_top"
    }

    fn select(&mut self, req: &StrategicRequest<'_>) -> SelectorResult {
        select_analytical_top(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptedPolicy {
    Top,
    PreferStress,
    SafestQsaf,
    RoundRobinRole,
}

impl ScriptedPolicy {
    pub fn name(self) -> &'static str {
        match self {
            ScriptedPolicy::Top => "top",
            ScriptedPolicy::PreferStress => "prefer_stress",
            ScriptedPolicy::SafestQsaf => "safest_qsaf",
            ScriptedPolicy::RoundRobinRole => "round_robin_role",
        }
    }
}

impl FromStr for ScriptedPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ScriptedPolicy::Top,
            ScriptedPolicy::PreferStress,
            ScriptedPolicy::SafestQsaf,
            ScriptedPolicy::RoundRobinRole,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| format!("unknown scripted policy `{s}`"))
    }
}

/// Deterministic stand-in for an LLM selector.
#[derive(Debug, Clone)]
pub struct ScriptedSelector {
    policy: ScriptedPolicy,
    id: String,
    calls: usize,
}

impl ScriptedSelector {
    pub fn new(policy: ScriptedPolicy) -> Self {
        Self {
            policy,
            id: format!("scripted:{}", policy.name()),
            calls: 0,
        }
    }

    /// Index into `shortlist` this policy picks on its next call.
    pub fn choose(&self, shortlist: &[PrunedBranch]) -> usize {
        let Some(top) = shortlist.first() else {
            return 0;
        };
        let first_of = |pred: &dyn Fn(&PrunedBranch) -> bool| shortlist.iter().position(pred);
        match self.policy {
            ScriptedPolicy::Top => 0,
            ScriptedPolicy::PreferStress => first_of(&|p| {
                p.role() != Role::Alpha && p.branch.action.token == top.branch.action.token
            })
            .unwrap_or(0),
            ScriptedPolicy::SafestQsaf => {
                let mut best = 0;
                for (i, p) in shortlist.iter().enumerate() {
                    if p.q_saf > shortlist[best].q_saf {
                        best = i;
                    }
                }
                best
            }
            ScriptedPolicy::RoundRobinRole => {
                let role = Role::ALL[self.calls % Role::ALL.len()];
                first_of(&|p| p.role() == role).unwrap_or(0)
            }
        }
    }
}

impl StrategicSelector for ScriptedSelector {
    fn id(&self) -> &str {
        &self.id
    }

    fn select(&mut self, req: &StrategicRequest<'_>) -> SelectorResult {
        let result = match req.shortlist.get(self.choose(req.shortlist)) {
            Some(p) => commit_choice(p, req),
            None => select_analytical_top(req),
        };
        self.calls += 1;
        result
    }
}

/// What a runtime source sees each step.
#[derive(Debug, Clone, Copy)]
pub struct RuntimeRequest<'a> {
    pub prompt: &'a PromptBundle,
    pub state: &'a CompactState,
    pub exec: &'a WorldlineExecutionState,
    pub obs: &'a RuntimeObservables,
    pub base: &'a TacticalDecision,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuntimeReply {
    /// Raw reply text; `None` defers to the arbiter.
    pub text: Option<String>,
    pub latency_s: Option<f64>,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    /// The source could not be reached; recorded as an `unavailable` fallback.
    pub unavailable: Option<String>,
}

pub trait RuntimeSource {
    fn id(&self) -> &str;
    fn propose(&mut self, req: &RuntimeRequest<'_>) -> RuntimeReply;
}

/// Contract enforcement only: always defers to the arbiter.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBased;

impl RuntimeSource for RuleBased {
    fn id(&self) -> &str {
        "rule_based"
    }

    fn propose(&mut self, _req: &RuntimeRequest<'_>) -> RuntimeReply {
        RuntimeReply::default()
    }
}

/// Scripted runtime that asks for SLOWER whenever TTC drops below a threshold.
#[derive(Debug, Clone, Copy)]
pub struct CautiousRuntime {
    pub ttc_threshold: f64,
}

impl RuntimeSource for CautiousRuntime {
    fn id(&self) -> &str {
        "scripted:cautious"
    }

    fn propose(&mut self, req: &RuntimeRequest<'_>) -> RuntimeReply {
        RuntimeReply {
            text: (req.obs.min_ttc < self.ttc_threshold).then(|| String::from("SLOWER\nclosing in")),
            ..RuntimeReply::default()
        }
    }
}

/// Parse the first line of a runtime reply as exactly one action token.
pub fn parse_action_line(text: &str) -> Result<PrimitiveAction, ParserFallback> {
    let line = text.lines().next().unwrap_or("").trim();
    line.parse()
        .map_err(|_| ParserFallback::UnknownAction(line.to_owned()))
}

/// Gate a runtime intent through the arbiter's decision. Overrides and
/// fallbacks are final; an infeasible or unparseable intent keeps the
/// arbiter's action.
pub fn runtime_decide(
    base: &TacticalDecision,
    reply: &RuntimeReply,
    state: &CompactState,
) -> (TacticalDecision, Option<ParserFallback>) {
    if let Some(why) = &reply.unavailable {
        return (base.clone(), Some(ParserFallback::Unavailable(why.clone())));
    }
    let Some(text) = reply.text.as_deref() else {
        return (base.clone(), None);
    };
    let intent = match parse_action_line(text) {
        Ok(a) => a,
        Err(e) => return (base.clone(), Some(e)),
    };
    if matches!(base.provenance, DecisionProvenance::Override | DecisionProvenance::Fallback)
        || !state.is_feasible(intent)
        || intent == base.action
    {
        return (base.clone(), None);
    }
    let provenance = match base.provenance {
        DecisionProvenance::Reactive => DecisionProvenance::Reactive,
        _ => DecisionProvenance::Override,
    };
    let d = TacticalDecision {
        action: intent,
        provenance,
        invalidation: None,
        drift: base.drift,
        reason_tag: Some(TAG_RUNTIME_CHOICE.into()),
    };
    (d, None)
}
