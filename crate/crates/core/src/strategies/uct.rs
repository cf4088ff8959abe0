//! Monte Carlo tree search with UCB1 selection and no rollouts.
//!
//! Selection walks down from the root through failure-free children by UCB1
//! until it reaches a node with no failure-free children; that node is then
//! expanded `num_children` times. Each observed child's fitness is its
//! validation value min–max normalized over every value seen so far, and is
//! backpropagated as a running mean along the selection path.

use serde::{Deserialize, Serialize};

use super::{Decision, Directive, Observation, ProposalRequest, SearchContext, Strategy};
use crate::error::{Error, Result};
use crate::types::{CandidateId, MetricDirection};
use crate::RunRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UctParams {
    pub num_children: u32,
    pub exploration: f64,
}

impl Default for UctParams {
    fn default() -> Self {
        UctParams {
            num_children: 3,
            exploration: std::f64::consts::SQRT_2,
        }
    }
}

impl UctParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_children == 0 || !(self.exploration >= 0.0) || !self.exploration.is_finite() {
            return Err(Error::Config(
                "uct: need num_children >= 1 and a finite exploration constant >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Index of the child to descend into. Unvisited children come first (in
/// order); otherwise the highest `mean + c·sqrt(ln N / n)`, earliest on ties.
pub fn ucb_select(parent_visits: u32, children: &[(f64, u32)], c: f64) -> Option<usize> {
    if let Some(i) = children.iter().position(|&(_, n)| n == 0) {
        return Some(i);
    }
    let ln_n = (parent_visits.max(1) as f64).ln();
    let mut best: Option<(usize, f64)> = None;
    for (i, &(q, n)) in children.iter().enumerate() {
        let score = q + c * (ln_n / n as f64).sqrt();
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

/// Min–max normalization oriented so that 1 is best; 0.5 on a degenerate range.
pub fn normalize_fitness(value: f64, lo: f64, hi: f64, direction: MetricDirection) -> f64 {
    if !(hi > lo) {
        return 0.5;
    }
    let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    match direction {
        MetricDirection::Maximize => t,
        MetricDirection::Minimize => 1.0 - t,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UctNode {
    pub candidate: CandidateId,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub visits: u32,
    pub mean_fitness: f64,
    pub buggy: bool,
}

pub struct UctSearch {
    ctx: SearchContext,
    params: UctParams,
    nodes: Vec<UctNode>,
    /// Node being expanded and the number of expansions left for this visit.
    expanding: Option<(usize, u32)>,
    lo: f64,
    hi: f64,
}

impl UctSearch {
    pub fn new(ctx: SearchContext, params: UctParams) -> Self {
        let root = UctNode {
            candidate: ctx.baseline_id,
            parent: None,
            children: Vec::new(),
            visits: 0,
            mean_fitness: 0.0,
            buggy: false,
        };
        let (lo, hi) = (ctx.baseline_val, ctx.baseline_val);
        UctSearch {
            ctx,
            params,
            nodes: vec![root],
            expanding: None,
            lo,
            hi,
        }
    }

    pub fn nodes(&self) -> &[UctNode] {
        &self.nodes
    }

    fn select_leaf(&self) -> usize {
        let mut at = 0;
        loop {
            let live: Vec<usize> = self.nodes[at]
                .children
                .iter()
                .copied()
                .filter(|&c| !self.nodes[c].buggy)
                .collect();
            if live.is_empty() {
                return at;
            }
            let stats: Vec<(f64, u32)> = live
                .iter()
                .map(|&c| (self.nodes[c].mean_fitness, self.nodes[c].visits))
                .collect();
            let pick =
                ucb_select(self.nodes[at].visits, &stats, self.params.exploration).unwrap_or(0);
            at = live[pick];
        }
    }

    fn backpropagate(&mut self, from: usize, fitness: f64) {
        let mut at = Some(from);
        while let Some(i) = at {
            let n = &mut self.nodes[i];
            n.visits += 1;
            n.mean_fitness += (fitness - n.mean_fitness) / n.visits as f64;
            at = n.parent;
        }
    }
}

impl Strategy for UctSearch {
    fn name(&self) -> &'static str {
        "uct"
    }

    fn decide(&mut self, _step_index: u32, _rng: &mut RunRng) -> Result<Decision> {
        let node = match self.expanding {
            Some((node, left)) if left > 0 => node,
            _ => {
                let leaf = self.select_leaf();
                self.expanding = Some((leaf, self.params.num_children));
                leaf
            }
        };
        let directive = if node == 0 {
            Directive::Draft
        } else {
            Directive::Refine
        };
        Ok(Decision::Propose(ProposalRequest::new(
            self.nodes[node].candidate,
            directive,
        )))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        let parent = match self.expanding {
            Some((node, left)) if left > 0 && self.nodes[node].candidate == obs.parent_id => {
                self.expanding = Some((node, left - 1));
                node
            }
            _ => {
                return Err(Error::Strategy(format!(
                    "uct: observation for {} does not match the pending expansion",
                    obs.candidate_id
                )))
            }
        };
        let fitness = match (obs.is_valid(), obs.val_metric) {
            (true, Some(v)) => {
                self.lo = self.lo.min(v);
                self.hi = self.hi.max(v);
                normalize_fitness(v, self.lo, self.hi, self.ctx.card.direction)
            }
            _ => 0.0,
        };
        let idx = self.nodes.len();
        self.nodes.push(UctNode {
            candidate: obs.candidate_id,
            parent: Some(parent),
            children: Vec::new(),
            visits: 0,
            mean_fitness: 0.0,
            buggy: !obs.is_valid(),
        });
        self.nodes[parent].children.push(idx);
        self.backpropagate(idx, fitness);
        Ok(())
    }
}
