//! Independent idea chains executed one after another.
//!
//! Each idea owns an equal slice of the budget (`budget / num_ideas`, the last
//! idea also takes the remainder). An idea starts from the baseline with a
//! `new_mechanism` run, then refines the latest successful run of its own
//! chain. Failed runs are retried through `debug` up to
//! `max_retries_per_run` times before the run slot is given up. An idea ends
//! when its slice is spent or it has used `max_runs` run slots; unspent
//! steps carry over to the next idea.

use serde::{Deserialize, Serialize};

use super::{Decision, Directive, Observation, ProposalRequest, SearchContext, Strategy};
use crate::error::{Error, Result};
use crate::types::CandidateId;
use crate::RunRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParallelLinearParams {
    pub num_ideas: u32,
    pub max_runs: u32,
    pub max_retries_per_run: u32,
}

impl Default for ParallelLinearParams {
    fn default() -> Self {
        ParallelLinearParams {
            num_ideas: 5,
            max_runs: 20,
            max_retries_per_run: 4,
        }
    }
}

impl ParallelLinearParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_ideas == 0 || self.max_runs == 0 {
            return Err(Error::Config(
                "parallel_linear: num_ideas and max_runs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Idea {
    index: u32,
    allowance: u32,
    steps_used: u32,
    slots_used: u32,
    /// Latest successful run of this chain.
    tip: Option<CandidateId>,
    retries: u32,
    retry_target: Option<CandidateId>,
}

pub struct ParallelLinearSearch {
    ctx: SearchContext,
    params: ParallelLinearParams,
    idea: Idea,
    steps_total: u32,
}

impl ParallelLinearSearch {
    pub fn new(ctx: SearchContext, params: ParallelLinearParams) -> Self {
        let first = Self::allowance_for(&ctx, &params, 0, 0);
        ParallelLinearSearch {
            idea: Idea::fresh(0, first),
            ctx,
            params,
            steps_total: 0,
        }
    }

    fn allowance_for(ctx: &SearchContext, p: &ParallelLinearParams, index: u32, carry: u32) -> u32 {
        let slice = ctx.budget / p.num_ideas;
        if index + 1 < p.num_ideas {
            slice + carry
        } else if index + 1 == p.num_ideas {
            slice + carry + ctx.budget % p.num_ideas
        } else {
            // extra ideas only exist when earlier chains ended early
            carry
        }
    }

    pub fn current_idea(&self) -> u32 {
        self.idea.index
    }

    fn advance_idea(&mut self) {
        let carry = self.idea.allowance.saturating_sub(self.idea.steps_used);
        let next = self.idea.index + 1;
        let mut allowance = Self::allowance_for(&self.ctx, &self.params, next, carry);
        if allowance == 0 {
            allowance = self.ctx.budget.saturating_sub(self.steps_total);
        }
        self.idea = Idea::fresh(next, allowance);
    }
}

impl Idea {
    fn fresh(index: u32, allowance: u32) -> Self {
        Idea {
            index,
            allowance,
            steps_used: 0,
            slots_used: 0,
            tip: None,
            retries: 0,
            retry_target: None,
        }
    }
}

impl Strategy for ParallelLinearSearch {
    fn name(&self) -> &'static str {
        "parallel_linear"
    }

    fn decide(&mut self, _step_index: u32, _rng: &mut RunRng) -> Result<Decision> {
        let idea = &self.idea;
        let req = if let Some(target) = idea.retry_target {
            ProposalRequest::new(target, Directive::Debug)
        } else if let Some(tip) = idea.tip {
            ProposalRequest::new(tip, Directive::Refine)
        } else {
            ProposalRequest::new(self.ctx.baseline_id, Directive::NewMechanism)
        };
        Ok(Decision::Propose(req))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.steps_total += 1;
        let max_runs = self.params.max_runs;
        let max_retries = self.params.max_retries_per_run;
        let idea = &mut self.idea;
        idea.steps_used += 1;
        if obs.is_valid() {
            idea.tip = Some(obs.candidate_id);
            idea.slots_used += 1;
            idea.retries = 0;
            idea.retry_target = None;
        } else if idea.retries < max_retries {
            idea.retries += 1;
            idea.retry_target = Some(obs.candidate_id);
        } else {
            // slot given up
            idea.slots_used += 1;
            idea.retries = 0;
            idea.retry_target = None;
        }
        if idea.steps_used >= idea.allowance || idea.slots_used >= max_runs {
            self.advance_idea();
        }
        Ok(())
    }
}
