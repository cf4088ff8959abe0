//! Greedy hill climbing that switches once, irreversibly, to round-robin
//! multi-branch search when the best-so-far curve stalls.

use serde::{Deserialize, Serialize};

use super::greedy::HillClimber;
use super::{Decision, Directive, Observation, ProposalRequest, SearchContext, Strategy};
use crate::error::{Error, Result};
use crate::metrics::{effective_dim, exploration_reach, normalized_improvement};
use crate::types::CandidateId;
use crate::RunRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StagnationThresholds {
    pub w_a: usize,
    pub kappa_a: usize,
    pub tau_r: f64,
    pub w_b: usize,
    pub kappa_b: usize,
    pub tau_d: f64,
}

impl Default for StagnationThresholds {
    fn default() -> Self {
        StagnationThresholds {
            w_a: 20,
            kappa_a: 2,
            tau_r: 0.30,
            w_b: 5,
            kappa_b: 2,
            tau_d: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveParams {
    pub window: usize,
    pub epsilon: f64,
    pub max_debug_retries: u32,
    pub thresholds: StagnationThresholds,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        AdaptiveParams {
            window: 50,
            epsilon: 0.0005,
            max_debug_retries: 3,
            thresholds: StagnationThresholds::default(),
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if self.window == 0 || !(self.epsilon >= 0.0) || t.w_a == 0 || t.w_b == 0 {
            return Err(Error::Config(
                "adaptive: window, w_a, w_b must be >= 1 and epsilon >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guidance {
    None,
    Deep,
    RefineFocus,
    Consolidate,
}

impl Guidance {
    pub fn directive(self) -> Directive {
        match self {
            Guidance::Deep => Directive::PerturbWide,
            Guidance::None | Guidance::RefineFocus | Guidance::Consolidate => Directive::Refine,
        }
    }
}

/// Trailing-slope stall test on the best-so-far curve after `k` completed steps.
pub fn adaptive_transition_check(
    curve: &[f64],
    k: usize,
    window: usize,
    epsilon: f64,
    remaining: u32,
) -> bool {
    if k < window + 1 || k > curve.len() || remaining <= 3 {
        return false;
    }
    let slope = (curve[k - 1] - curve[k - 1 - window]) / window as f64;
    slope <= epsilon
}

/// Number of Phase 2 branches for the remaining budget; `None` below 4.
pub fn branch_count(remaining: u32) -> Option<usize> {
    match remaining {
        0..=3 => None,
        4..=15 => Some(1),
        16..=30 => Some(2),
        _ => Some(3),
    }
}

/// Branch-local stagnation diagnosis. `history[i]` is whether branch step `i`
/// improved the branch incumbent.
pub fn stagnation_diagnose(
    history: &[bool],
    reach_norm: f64,
    d_eff: Option<f64>,
    t: &StagnationThresholds,
) -> Guidance {
    if history.len() < t.w_a.min(t.w_b) {
        return Guidance::None;
    }
    let gains = |w: usize| {
        history[history.len().saturating_sub(w)..]
            .iter()
            .filter(|b| **b)
            .count()
    };
    let shallow = gains(t.w_a) < t.kappa_a && reach_norm < t.tau_r;
    let divergent = gains(t.w_b) < t.kappa_b && d_eff.is_some_and(|d| d > t.tau_d);
    match (shallow, divergent) {
        (true, true) => Guidance::Consolidate,
        (true, false) => Guidance::Deep,
        (false, true) => Guidance::RefineFocus,
        (false, false) => Guidance::None,
    }
}

#[derive(Debug, Clone)]
struct Branch {
    climber: HillClimber,
    started: bool,
    history: Vec<bool>,
    embeddings: Vec<Vec<f64>>,
}

pub struct AdaptiveSearch {
    ctx: SearchContext,
    params: AdaptiveParams,
    phase: Phase,
    climber: HillClimber,
    curve: Vec<f64>,
    /// Accepted Phase 1 incumbents in acceptance order.
    accepted: Vec<(CandidateId, f64, Vec<f64>)>,
    branches: Vec<Branch>,
    next_branch: usize,
    in_flight: Option<usize>,
    transition_step: Option<usize>,
}

impl AdaptiveSearch {
    pub fn new(ctx: SearchContext, params: AdaptiveParams) -> Self {
        let climber = HillClimber::new(
            ctx.baseline_id,
            ctx.baseline_val,
            ctx.baseline_genotype.clone(),
            params.max_debug_retries,
        );
        AdaptiveSearch {
            ctx,
            params,
            phase: Phase::One,
            climber,
            curve: Vec::new(),
            accepted: Vec::new(),
            branches: Vec::new(),
            next_branch: 0,
            in_flight: None,
            transition_step: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn curve(&self) -> &[f64] {
        &self.curve
    }

    /// Completed step count at which Phase 2 began.
    pub fn transition_step(&self) -> Option<usize> {
        self.transition_step
    }

    /// Fork points of the Phase 2 branches.
    pub fn branch_roots(&self) -> Vec<CandidateId> {
        self.branches.iter().map(|b| b.climber.incumbent).collect()
    }

    fn improvement(&self, val: f64) -> f64 {
        normalized_improvement(&self.ctx.card, val).unwrap_or(0.0)
    }

    fn enter_phase_two(&mut self, n: usize) {
        let direction = self.ctx.card.direction;
        let mut ranked = self.accepted.clone();
        // stable sort keeps the earlier candidate first on ties
        ranked.sort_by(|a, b| {
            if direction.is_better(a.1, b.1) {
                std::cmp::Ordering::Less
            } else if direction.is_better(b.1, a.1) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        ranked.truncate(n);
        while ranked.len() < n {
            ranked.push((
                self.ctx.baseline_id,
                self.ctx.baseline_val,
                self.ctx.baseline_genotype.clone(),
            ));
        }
        self.branches = ranked
            .into_iter()
            .map(|(id, val, g)| Branch {
                climber: HillClimber::new(id, val, g, self.params.max_debug_retries),
                started: false,
                history: Vec::new(),
                embeddings: Vec::new(),
            })
            .collect();
        self.next_branch = 0;
        self.phase = Phase::Two;
        self.transition_step = Some(self.curve.len());
    }

    fn branch_guidance(&self, b: &Branch) -> Guidance {
        let reach = exploration_reach(&b.embeddings, &self.ctx.baseline_genotype).unwrap_or(0.0);
        let reach_norm = if self.ctx.reach_scale > 0.0 {
            reach / self.ctx.reach_scale
        } else {
            0.0
        };
        stagnation_diagnose(
            &b.history,
            reach_norm,
            effective_dim(&b.embeddings),
            &self.params.thresholds,
        )
    }

    /// Guidance the next Phase 2 step of branch `i` would receive.
    pub fn guidance_for(&self, i: usize) -> Option<Guidance> {
        self.branches.get(i).map(|b| self.branch_guidance(b))
    }
}

impl Strategy for AdaptiveSearch {
    fn name(&self) -> &'static str {
        "adaptive"
    }

    fn decide(&mut self, _step_index: u32, _rng: &mut RunRng) -> Result<Decision> {
        let req = match self.phase {
            Phase::One => self.climber.request(Directive::Refine),
            Phase::Two => {
                let i = self.next_branch;
                self.in_flight = Some(i);
                let b = &self.branches[i];
                if !b.started {
                    ProposalRequest::new(b.climber.incumbent, Directive::NewMechanism)
                } else {
                    b.climber.request(self.branch_guidance(b).directive())
                }
            }
        };
        Ok(Decision::Propose(req))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        let direction = self.ctx.card.direction;
        let step_gain = match (obs.is_valid(), obs.val_metric) {
            (true, Some(v)) => self.improvement(v),
            _ => 0.0,
        };
        let best = self.curve.last().copied().unwrap_or(0.0).max(step_gain);
        self.curve.push(best);

        match self.phase {
            Phase::One => {
                if self.climber.observe(obs, direction) {
                    self.accepted.push((
                        obs.candidate_id,
                        self.climber.incumbent_val,
                        obs.genotype.clone(),
                    ));
                }
                let k = self.curve.len();
                let remaining = self.ctx.budget.saturating_sub(k as u32);
                if adaptive_transition_check(
                    &self.curve,
                    k,
                    self.params.window,
                    self.params.epsilon,
                    remaining,
                ) {
                    if let Some(n) = branch_count(remaining) {
                        self.enter_phase_two(n);
                    }
                }
            }
            Phase::Two => {
                let i = self.in_flight.take().ok_or_else(|| {
                    Error::Strategy("adaptive: observation without a pending branch request".into())
                })?;
                let b = &mut self.branches[i];
                b.started = true;
                let improved = b.climber.observe(obs, direction);
                b.history.push(improved);
                if obs.is_valid() {
                    b.embeddings.push(obs.genotype.clone());
                }
                self.next_branch = (i + 1) % self.branches.len();
            }
        }
        Ok(())
    }
}
