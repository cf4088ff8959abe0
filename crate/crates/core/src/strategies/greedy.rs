use serde::{Deserialize, Serialize};

use super::{Decision, Directive, Observation, ProposalRequest, SearchContext, Strategy};
use crate::error::Result;
use crate::types::{CandidateId, FailureKind, MetricDirection};
use crate::RunRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreedyParams {
    pub max_debug_retries: u32,
}

impl Default for GreedyParams {
    fn default() -> Self {
        GreedyParams {
            max_debug_retries: 3,
        }
    }
}

/// Single-incumbent strict-improvement acceptance with a bounded debug loop.
/// Shared by the greedy policy, adaptive Phase 1 and every adaptive branch.
#[derive(Debug, Clone, PartialEq)]
pub struct HillClimber {
    pub incumbent: CandidateId,
    pub incumbent_val: f64,
    pub incumbent_genotype: Vec<f64>,
    debug_target: Option<CandidateId>,
    debug_retries: u32,
    max_debug_retries: u32,
}

impl HillClimber {
    pub fn new(
        incumbent: CandidateId,
        val: f64,
        genotype: Vec<f64>,
        max_debug_retries: u32,
    ) -> Self {
        HillClimber {
            incumbent,
            incumbent_val: val,
            incumbent_genotype: genotype,
            debug_target: None,
            debug_retries: 0,
            max_debug_retries,
        }
    }

    /// Applies the acceptance rule. Returns `true` when the child was adopted.
    pub fn observe(&mut self, obs: &Observation, direction: MetricDirection) -> bool {
        if let (true, Some(v)) = (obs.is_valid(), obs.val_metric) {
            if direction.is_better(v, self.incumbent_val) {
                self.incumbent = obs.candidate_id;
                self.incumbent_val = v;
                self.incumbent_genotype = obs.genotype.clone();
                self.debug_target = None;
                self.debug_retries = 0;
                return true;
            }
        }
        if obs.failure == FailureKind::ExecutionError && self.debug_retries < self.max_debug_retries
        {
            self.debug_retries += 1;
            self.debug_target = Some(obs.candidate_id);
        } else {
            self.debug_target = None;
            self.debug_retries = 0;
        }
        false
    }

    /// The pending debug request, if the last step crashed and retries remain.
    pub fn debug_request(&self) -> Option<ProposalRequest> {
        self.debug_target
            .map(|id| ProposalRequest::new(id, Directive::Debug))
    }

    pub fn request(&self, otherwise: Directive) -> ProposalRequest {
        self.debug_request()
            .unwrap_or_else(|| ProposalRequest::new(self.incumbent, otherwise))
    }
}

pub struct GreedySearch {
    ctx: SearchContext,
    climber: HillClimber,
}

impl GreedySearch {
    pub fn new(ctx: SearchContext, params: GreedyParams) -> Self {
        let climber = HillClimber::new(
            ctx.baseline_id,
            ctx.baseline_val,
            ctx.baseline_genotype.clone(),
            params.max_debug_retries,
        );
        GreedySearch { ctx, climber }
    }

    pub fn incumbent(&self) -> (CandidateId, f64) {
        (self.climber.incumbent, self.climber.incumbent_val)
    }
}

impl Strategy for GreedySearch {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn decide(&mut self, _step_index: u32, _rng: &mut RunRng) -> Result<Decision> {
        Ok(Decision::Propose(self.climber.request(Directive::Refine)))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.climber.observe(obs, self.ctx.card.direction);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::testing::{ctx, obs, obs_with, propose};
    use rand::SeedableRng;

    fn greedy_at(val: f64) -> GreedySearch {
        let mut c = ctx(100);
        c.baseline_val = val;
        GreedySearch::new(c, GreedyParams::default())
    }

    #[test]
    fn adopts_strict_improvement() {
        let mut rng = RunRng::seed_from_u64(0);
        let mut g = greedy_at(0.50);
        g.observe(&obs(1, 0, Directive::Refine, Some(0.51)))
            .unwrap();
        assert_eq!(g.incumbent(), (CandidateId(1), 0.51));
        let r = propose(g.decide(2, &mut rng).unwrap());
        assert_eq!((r.parent, r.directive), (CandidateId(1), Directive::Refine));
    }

    #[test]
    fn discards_ties() {
        let mut g = greedy_at(0.50);
        g.observe(&obs(1, 0, Directive::Refine, Some(0.50)))
            .unwrap();
        assert_eq!(g.incumbent().0, CandidateId::BASELINE);
    }

    #[test]
    fn debugs_crashes_up_to_three_times() {
        let mut rng = RunRng::seed_from_u64(0);
        let mut g = greedy_at(0.50);
        for step in 1..=3 {
            g.observe(&obs(step, 0, Directive::Refine, None)).unwrap();
            let r = propose(g.decide(step + 1, &mut rng).unwrap());
            assert_eq!(
                (r.parent, r.directive),
                (CandidateId(step), Directive::Debug)
            );
        }
        g.observe(&obs(4, 3, Directive::Debug, None)).unwrap();
        let r = propose(g.decide(5, &mut rng).unwrap());
        assert_eq!(
            (r.parent, r.directive),
            (CandidateId::BASELINE, Directive::Refine)
        );
    }

    #[test]
    fn other_failures_do_not_debug() {
        let mut rng = RunRng::seed_from_u64(0);
        let mut g = greedy_at(0.50);
        for kind in [
            FailureKind::Timeout,
            FailureKind::InvalidMetric,
            FailureKind::ConstraintViolation,
        ] {
            g.observe(&obs_with(1, 0, Directive::Refine, None, kind))
                .unwrap();
            let r = propose(g.decide(2, &mut rng).unwrap());
            assert_eq!(r.directive, Directive::Refine);
        }
    }

    #[test]
    fn minimize_direction() {
        let mut c = ctx(100);
        c.card = crate::types::TaskCard::new("m", MetricDirection::Minimize, 0.0, Some(1.0), 0.5)
            .unwrap();
        c.baseline_val = 0.5;
        let mut g = GreedySearch::new(c, GreedyParams::default());
        g.observe(&obs(1, 0, Directive::Refine, Some(0.6))).unwrap();
        assert_eq!(g.incumbent().0, CandidateId::BASELINE);
        g.observe(&obs(2, 0, Directive::Refine, Some(0.4))).unwrap();
        assert_eq!(g.incumbent().0, CandidateId(2));
    }
}
