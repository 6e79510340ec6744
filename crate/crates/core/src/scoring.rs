//! Analytical branch scoring, the four-key total order, and the role-diverse
//! shortlist that bounds what a selector gets to see.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::worldline::{Role, WorldLineBranch};

/// TTC normalizer (s) inside the safety-quality term.
pub const TTC_NORM: f64 = 5.0;
/// Front-gap normalizer (m) inside the safety-quality term.
pub const GAP_NORM: f64 = 35.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub wq_ttc: f64,
    pub wq_gap: f64,
    pub wq_risk: f64,
    pub lambda_saf: f64,
    pub lambda_eff: f64,
    pub lambda_cmf: f64,
    pub lambda_unc: f64,
    pub shortlist_k: usize,
    pub diversity: bool,
    /// Speed (m/s) that normalizes progress into the efficiency score.
    pub v_max: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            wq_ttc: 0.5,
            wq_gap: 0.3,
            wq_risk: 0.4,
            lambda_saf: 0.5,
            lambda_eff: 0.3,
            lambda_cmf: 0.1,
            lambda_unc: 0.1,
            shortlist_k: 3,
            diversity: true,
            v_max: 130.0 / 3.6,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        let w = [
            self.wq_ttc,
            self.wq_gap,
            self.wq_risk,
            self.lambda_saf,
            self.lambda_eff,
            self.lambda_cmf,
            self.lambda_unc,
        ];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err("scoring weights must be non-negative");
        }
        if self.shortlist_k < 1 {
            return Err("shortlist_k must be at least 1");
        }
        if !(self.v_max > 0.0) {
            return Err("v_max must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedBranch {
    pub branch: WorldLineBranch,
    pub q_saf: f64,
    pub s_eff: f64,
    pub s_agg: f64,
    /// 1-based position under [`order_branches`]; 0 until ordered.
    pub rank: usize,
}

impl PrunedBranch {
    pub fn action_id(&self) -> u8 {
        self.branch.action.action_id
    }

    pub fn role(&self) -> Role {
        self.branch.role
    }
}

pub fn score_branch(b: &WorldLineBranch, cfg: &ScoringConfig) -> PrunedBranch {
    let q_saf = (cfg.wq_ttc * (b.min_ttc / TTC_NORM).min(1.0)
        + cfg.wq_gap * (b.front_gap / GAP_NORM).min(1.0)
        - cfg.wq_risk * b.collision_risk)
        .max(0.0);
    let reach = cfg.v_max * b.horizon;
    let s_eff = if reach > 0.0 {
        (b.predicted_progress / reach).min(1.0)
    } else {
        0.0
    };
    let s_agg = cfg.lambda_saf * q_saf + cfg.lambda_eff * s_eff
        + cfg.lambda_cmf * (1.0 - b.comfort_penalty).max(0.0)
        - cfg.lambda_unc * b.uncertainty;
    PrunedBranch {
        branch: b.clone(),
        q_saf,
        s_eff,
        s_agg,
        rank: 0,
    }
}

/// Descending `s_agg`, descending `q_saf`, ascending action id, ascending branch id.
pub fn four_key(a: &PrunedBranch, b: &PrunedBranch) -> Ordering {
    b.s_agg
        .total_cmp(&a.s_agg)
        .then(b.q_saf.total_cmp(&a.q_saf))
        .then(a.action_id().cmp(&b.action_id()))
        .then(a.branch.branch_id.cmp(&b.branch.branch_id))
}

/// Sort by the four-key order and assign 1-based ranks.
pub fn order_branches(mut scored: Vec<PrunedBranch>) -> Vec<PrunedBranch> {
    scored.sort_by(four_key);
    for (i, p) in scored.iter_mut().enumerate() {
        p.rank = i + 1;
    }
    scored
}

/// Up to `k` branches from an ordered list. With `diversity`, the best branch
/// of each role is taken first (in order of appearance), then the remainder
/// is backfilled by rank.
pub fn shortlist(ordered: &[PrunedBranch], k: usize, diversity: bool) -> Vec<PrunedBranch> {
    let mut picked: Vec<usize> = Vec::with_capacity(k.min(ordered.len()));
    if diversity {
        let mut seen: Vec<Role> = Vec::new();
        for (i, p) in ordered.iter().enumerate() {
            if picked.len() == k {
                break;
            }
            if !seen.contains(&p.role()) {
                seen.push(p.role());
                picked.push(i);
            }
        }
    }
    for i in 0..ordered.len() {
        if picked.len() >= k {
            break;
        }
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    let mut out: Vec<PrunedBranch> = picked.into_iter().map(|i| ordered[i].clone()).collect();
    out.sort_by(four_key);
    out
}
