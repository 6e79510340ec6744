//! The strategic forecast contract: condition atoms `metric_cmp:threshold`,
//! the typed forecast object, and strict validation of selector output.
//!
//! The forecast is split into a [`ForecastContract`] (everything the runtime
//! may act on) and a [`Provenance`] (selector id, rationale tags, prompt hash).
//! The arbiter only ever receives the contract.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::action::PrimitiveAction;
use crate::scoring::PrunedBranch;

/// Per-set cap on validity and abort atoms.
pub const MAX_ATOMS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FrontGap,
    MinTtc,
    DriftScore,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::FrontGap, Metric::MinTtc, Metric::DriftScore];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FrontGap => "front_gap",
            Metric::MinTtc => "min_ttc",
            Metric::DriftScore => "drift_score",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Ge,
    Gt,
    Le,
    Lt,
}

impl Comparator {
    pub const ALL: [Comparator; 4] = [Comparator::Ge, Comparator::Gt, Comparator::Le, Comparator::Lt];

    pub fn name(self) -> &'static str {
        match self {
            Comparator::Ge => "ge",
            Comparator::Gt => "gt",
            Comparator::Le => "le",
            Comparator::Lt => "lt",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Ge => lhs >= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Lt => lhs < rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum AtomError {
    #[error("unknown metric")]
    UnknownMetric,
    #[error("unknown comparator")]
    UnknownComparator,
    #[error("malformed threshold")]
    MalformedThreshold,
    #[error("threshold out of range")]
    ThresholdOutOfRange,
}

impl AtomError {
    pub fn kind(self) -> &'static str {
        match self {
            AtomError::UnknownMetric => "unknown_metric",
            AtomError::UnknownComparator => "unknown_comparator",
            AtomError::MalformedThreshold => "malformed_threshold",
            AtomError::ThresholdOutOfRange => "threshold_out_of_range",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionAtom {
    pub metric: Metric,
    pub cmp: Comparator,
    pub threshold: f64,
}

impl ConditionAtom {
    pub fn new(metric: Metric, cmp: Comparator, threshold: f64) -> Result<Self, AtomError> {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(AtomError::MalformedThreshold);
        }
        if metric == Metric::DriftScore && threshold > 1.0 {
            return Err(AtomError::ThresholdOutOfRange);
        }
        Ok(Self {
            metric,
            cmp,
            threshold,
        })
    }

    pub fn eval(&self, obs: &RuntimeObservables) -> bool {
        let lhs = match self.metric {
            Metric::FrontGap => obs.front_gap,
            Metric::MinTtc => obs.min_ttc,
            Metric::DriftScore => obs.drift_score,
        };
        self.cmp.holds(lhs, self.threshold)
    }
}

pub fn eval_atom(atom: &ConditionAtom, obs: &RuntimeObservables) -> bool {
    atom.eval(obs)
}

fn is_threshold_literal(s: &str) -> bool {
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s, None),
    };
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    digits(int) && frac.is_none_or(digits)
}

/// Parse one atom. Whitespace is not tolerated anywhere.
pub fn parse_atom(text: &str) -> Result<ConditionAtom, AtomError> {
    let (head, threshold) = match text.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (text, None),
    };
    let (metric, cmp_text) = Metric::ALL
        .into_iter()
        .find_map(|m| {
            let rest = head.strip_prefix(m.name())?;
            if rest.is_empty() {
                Some((m, ""))
            } else {
                rest.strip_prefix('_').map(|c| (m, c))
            }
        })
        .ok_or(AtomError::UnknownMetric)?;
    let cmp = Comparator::ALL
        .into_iter()
        .find(|c| c.name() == cmp_text)
        .ok_or(AtomError::UnknownComparator)?;
    let threshold = threshold.ok_or(AtomError::MalformedThreshold)?;
    if !is_threshold_literal(threshold) {
        return Err(AtomError::MalformedThreshold);
    }
    let value: f64 = threshold.parse().map_err(|_| AtomError::MalformedThreshold)?;
    ConditionAtom::new(metric, cmp, value)
}

pub fn render_atom(atom: &ConditionAtom) -> String {
    atom.to_string()
}

impl fmt::Display for ConditionAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut t = format!("{}", self.threshold);
        if !t.contains('.') {
            t.push_str(".0");
        }
        write!(f, "{}_{}:{}", self.metric.name(), self.cmp.name(), t)
    }
}

impl FromStr for ConditionAtom {
    type Err = AtomError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_atom(s)
    }
}

impl Serialize for ConditionAtom {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConditionAtom {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_atom(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeObservables {
    pub front_gap: f64,
    pub min_ttc: f64,
    pub drift_score: f64,
    pub lane: usize,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommitFamily {
    Keep,
    Accelerate,
    ChangeLeft,
    ChangeRight,
    Decelerate,
}

impl CommitFamily {
    pub const ALL: [CommitFamily; 5] = [
        CommitFamily::Keep,
        CommitFamily::Accelerate,
        CommitFamily::ChangeLeft,
        CommitFamily::ChangeRight,
        CommitFamily::Decelerate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommitFamily::Keep => "KEEP",
            CommitFamily::Accelerate => "ACCELERATE",
            CommitFamily::ChangeLeft => "CHANGE_LEFT",
            CommitFamily::ChangeRight => "CHANGE_RIGHT",
            CommitFamily::Decelerate => "DECELERATE",
        }
    }

    /// The one family consistent with a primitive action.
    pub fn for_action(a: PrimitiveAction) -> Self {
        match a {
            PrimitiveAction::LaneLeft => CommitFamily::ChangeLeft,
            PrimitiveAction::Idle => CommitFamily::Keep,
            PrimitiveAction::LaneRight => CommitFamily::ChangeRight,
            PrimitiveAction::Faster => CommitFamily::Accelerate,
            PrimitiveAction::Slower => CommitFamily::Decelerate,
        }
    }
}

impl FromStr for CommitFamily {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|f| f.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Authority {
    Low,
    Med,
    High,
}

impl Authority {
    pub const ALL: [Authority; 3] = [Authority::Low, Authority::Med, Authority::High];

    pub fn name(self) -> &'static str {
        match self {
            Authority::Low => "low",
            Authority::Med => "med",
            Authority::High => "high",
        }
    }
}

impl FromStr for Authority {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RationaleTag {
    SafetyMargin,
    Progress,
    StressHedge,
    LaneOpportunity,
    UncertaintyAvoidance,
}

impl RationaleTag {
    pub const ALL: [RationaleTag; 5] = [
        RationaleTag::SafetyMargin,
        RationaleTag::Progress,
        RationaleTag::StressHedge,
        RationaleTag::LaneOpportunity,
        RationaleTag::UncertaintyAvoidance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RationaleTag::SafetyMargin => "safety_margin",
            RationaleTag::Progress => "progress",
            RationaleTag::StressHedge => "stress_hedge",
            RationaleTag::LaneOpportunity => "lane_opportunity",
            RationaleTag::UncertaintyAvoidance => "uncertainty_avoidance",
        }
    }
}

impl FromStr for RationaleTag {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|t| t.name() == s).ok_or(())
    }
}

/// The runtime-visible part of a forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastContract {
    pub branch_id: String,
    pub action: PrimitiveAction,
    pub commit_family: CommitFamily,
    pub horizon_steps: usize,
    pub validity: Vec<ConditionAtom>,
    pub abort: Vec<ConditionAtom>,
    pub fallback: PrimitiveAction,
    pub authority: Authority,
    pub issue_step: usize,
}

impl ForecastContract {
    pub fn validity_holds(&self, obs: &RuntimeObservables) -> bool {
        self.validity.iter().all(|a| a.eval(obs))
    }

    pub fn abort_fires(&self, obs: &RuntimeObservables) -> bool {
        self.abort.iter().any(|a| a.eval(obs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub selector_id: String,
    pub rationale_tags: Vec<RationaleTag>,
    pub prompt_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicForecast {
    pub contract: ForecastContract,
    pub provenance: Provenance,
}

/// Untyped forecast fields exactly as a selector emits them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawForecast {
    pub branch_id: String,
    pub action: String,
    pub commit_family: String,
    pub horizon_steps: i64,
    pub validity: Vec<String>,
    pub abort: Vec<String>,
    pub fallback: String,
    pub authority: String,
    pub rationale_tags: Vec<String>,
}

impl RawForecast {
    pub const FIELDS: [&'static str; 9] = [
        "branch_id",
        "action",
        "commit_family",
        "horizon_steps",
        "validity",
        "abort",
        "fallback",
        "authority",
        "rationale_tags",
    ];

    pub fn from_contract(c: &ForecastContract, tags: &[RationaleTag]) -> Self {
        RawForecast {
            branch_id: c.branch_id.clone(),
            action: c.action.token().to_owned(),
            commit_family: c.commit_family.name().to_owned(),
            horizon_steps: c.horizon_steps as i64,
            validity: c.validity.iter().map(ToString::to_string).collect(),
            abort: c.abort.iter().map(ToString::to_string).collect(),
            fallback: c.fallback.token().to_owned(),
            authority: c.authority.name().to_owned(),
            rationale_tags: tags.iter().map(|t| t.name().to_owned()).collect(),
        }
    }
}

/// Why a selector response was not accepted as a forecast.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParserFallback {
    #[error("response is not a bare JSON object")]
    NonStrict,
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` has the wrong type")]
    TypeMismatch(&'static str),
    #[error("branch `{0}` is not in the shortlist")]
    UnknownBranch(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("action does not match the selected branch")]
    ActionMismatch,
    #[error("action is not feasible")]
    InfeasibleAction,
    #[error("fallback action is not feasible")]
    InfeasibleFallback,
    #[error("unknown commit family `{0}`")]
    UnknownCommitFamily(String),
    #[error("commit family does not match the action")]
    FamilyMismatch,
    #[error("horizon must be at least one step")]
    InvalidHorizon,
    #[error("unknown authority `{0}`")]
    UnknownAuthority(String),
    #[error("unknown rationale tag `{0}`")]
    UnknownRationaleTag(String),
    #[error("{field} atom `{text}`: {error}")]
    Atom {
        field: &'static str,
        text: String,
        error: AtomError,
    },
    #[error("selector unavailable: {0}")]
    Unavailable(String),
}

impl ParserFallback {
    /// Stable snake_case label used as the ledger counter key.
    pub fn kind(&self) -> &'static str {
        match self {
            ParserFallback::NonStrict => "non_strict",
            ParserFallback::MissingField(_) => "missing_field",
            ParserFallback::TypeMismatch(_) => "type_mismatch",
            ParserFallback::UnknownBranch(_) => "unknown_branch",
            ParserFallback::UnknownAction(_) => "unknown_action",
            ParserFallback::ActionMismatch => "action_mismatch",
            ParserFallback::InfeasibleAction => "infeasible_action",
            ParserFallback::InfeasibleFallback => "infeasible_fallback",
            ParserFallback::UnknownCommitFamily(_) => "unknown_commit_family",
            ParserFallback::FamilyMismatch => "family_mismatch",
            ParserFallback::InvalidHorizon => "invalid_horizon",
            ParserFallback::UnknownAuthority(_) => "unknown_authority",
            ParserFallback::UnknownRationaleTag(_) => "unknown_rationale_tag",
            ParserFallback::Atom { error, .. } => error.kind(),
            ParserFallback::Unavailable(_) => "unavailable",
        }
    }
}

/// Everything validation needs besides the raw fields.
#[derive(Debug, Clone, Copy)]
pub struct ValidationContext<'a> {
    pub shortlist: &'a [PrunedBranch],
    pub feasible: &'a [PrimitiveAction],
    pub step: usize,
    /// Horizons above this are truncated.
    pub max_horizon: usize,
    pub selector_id: &'a str,
    pub prompt_hash: &'a str,
}

fn parse_atoms(field: &'static str, texts: &[String]) -> Result<Vec<ConditionAtom>, ParserFallback> {
    if texts.len() > MAX_ATOMS {
        log::warn!("{field}: {} atoms truncated to {MAX_ATOMS}", texts.len());
    }
    texts
        .iter()
        .take(MAX_ATOMS)
        .map(|t| {
            parse_atom(t).map_err(|error| ParserFallback::Atom {
                field,
                text: t.clone(),
                error,
            })
        })
        .collect()
}

/// Type-check raw fields against the shortlist and feasible set.
pub fn validate_forecast(
    raw: &RawForecast,
    ctx: &ValidationContext<'_>,
) -> Result<StrategicForecast, ParserFallback> {
    let branch = ctx
        .shortlist
        .iter()
        .find(|p| p.branch.branch_id == raw.branch_id)
        .ok_or_else(|| ParserFallback::UnknownBranch(raw.branch_id.clone()))?;
    let action: PrimitiveAction = raw
        .action
        .parse()
        .map_err(|_| ParserFallback::UnknownAction(raw.action.clone()))?;
    if action != branch.branch.action.token {
        return Err(ParserFallback::ActionMismatch);
    }
    if !ctx.feasible.contains(&action) {
        return Err(ParserFallback::InfeasibleAction);
    }
    let commit_family: CommitFamily = raw
        .commit_family
        .parse()
        .map_err(|_| ParserFallback::UnknownCommitFamily(raw.commit_family.clone()))?;
    if commit_family != CommitFamily::for_action(action) {
        return Err(ParserFallback::FamilyMismatch);
    }
    if raw.horizon_steps < 1 {
        return Err(ParserFallback::InvalidHorizon);
    }
    let mut horizon_steps = usize::try_from(raw.horizon_steps).unwrap_or(usize::MAX);
    if horizon_steps > ctx.max_horizon {
        log::warn!("horizon {horizon_steps} capped to {}", ctx.max_horizon);
        horizon_steps = ctx.max_horizon;
    }
    let validity = parse_atoms("validity", &raw.validity)?;
    let abort = parse_atoms("abort", &raw.abort)?;
    let fallback: PrimitiveAction = raw
        .fallback
        .parse()
        .map_err(|_| ParserFallback::UnknownAction(raw.fallback.clone()))?;
    if !ctx.feasible.contains(&fallback) {
        return Err(ParserFallback::InfeasibleFallback);
    }
    let authority: Authority = raw
        .authority
        .parse()
        .map_err(|_| ParserFallback::UnknownAuthority(raw.authority.clone()))?;
    let rationale_tags = raw
        .rationale_tags
        .iter()
        .map(|t| {
            t.parse::<RationaleTag>()
                .map_err(|_| ParserFallback::UnknownRationaleTag(t.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StrategicForecast {
        contract: ForecastContract {
            branch_id: raw.branch_id.clone(),
            action,
            commit_family,
            horizon_steps,
            validity,
            abort,
            fallback,
            authority,
            issue_step: ctx.step,
        },
        provenance: Provenance {
            selector_id: ctx.selector_id.to_owned(),
            rationale_tags,
            prompt_hash: ctx.prompt_hash.to_owned(),
        },
    })
}

fn field<'a>(obj: &'a Map<String, Value>, name: &'static str) -> Result<&'a Value, ParserFallback> {
    obj.get(name).ok_or(ParserFallback::MissingField(name))
}

fn string_field(obj: &Map<String, Value>, name: &'static str) -> Result<String, ParserFallback> {
    field(obj, name)?
        .as_str()
        .map(ToOwned::to_owned)
        .ok_or(ParserFallback::TypeMismatch(name))
}

fn string_list(obj: &Map<String, Value>, name: &'static str) -> Result<Vec<String>, ParserFallback> {
    field(obj, name)?
        .as_array()
        .ok_or(ParserFallback::TypeMismatch(name))?
        .iter()
        .map(|v| v.as_str().map(ToOwned::to_owned).ok_or(ParserFallback::TypeMismatch(name)))
        .collect()
}

/// Strictly extract raw forecast fields from a response body. The body must be
/// a single JSON object with nothing around it.
pub fn parse_raw_forecast(content: &str) -> Result<RawForecast, ParserFallback> {
    let value: Value = serde_json::from_str(content).map_err(|_| ParserFallback::NonStrict)?;
    let obj = value.as_object().ok_or(ParserFallback::NonStrict)?;
    let horizon = field(obj, "horizon_steps")?;
    let horizon_steps = horizon
        .as_i64()
        .or_else(|| horizon.as_u64().map(|_| i64::MAX))
        .ok_or(ParserFallback::TypeMismatch("horizon_steps"))?;
    Ok(RawForecast {
        branch_id: string_field(obj, "branch_id")?,
        action: string_field(obj, "action")?,
        commit_family: string_field(obj, "commit_family")?,
        horizon_steps,
        validity: string_list(obj, "validity")?,
        abort: string_list(obj, "abort")?,
        fallback: string_field(obj, "fallback")?,
        authority: string_field(obj, "authority")?,
        rationale_tags: string_list(obj, "rationale_tags")?,
    })
}

/// Strict parse followed by validation.
pub fn parse_forecast_response(
    content: &str,
    ctx: &ValidationContext<'_>,
) -> Result<StrategicForecast, ParserFallback> {
    validate_forecast(&parse_raw_forecast(content)?, ctx)
}
