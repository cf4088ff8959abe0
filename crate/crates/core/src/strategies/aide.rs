//! Solution-space tree search: drafts, greedy improvement of the best good
//! node, and stochastic repair of buggy leaves.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Decision, Directive, NodeStatus, Observation, ProposalRequest, SearchContext, Strategy,
};
use crate::error::{Error, Result};
use crate::types::CandidateId;
use crate::RunRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AideParams {
    pub num_drafts: u32,
    pub debug_prob: f64,
    pub max_debug_depth: u32,
}

impl Default for AideParams {
    fn default() -> Self {
        AideParams {
            num_drafts: 5,
            debug_prob: 0.5,
            max_debug_depth: 3,
        }
    }
}

impl AideParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_drafts == 0
            || self.max_debug_depth == 0
            || !(0.0..=1.0).contains(&self.debug_prob)
        {
            return Err(Error::Config(
                "aide: need num_drafts >= 1, max_debug_depth >= 1, debug_prob in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AideNode {
    is_root: bool,
    status: NodeStatus,
    val: Option<f64>,
    debug_depth: u32,
    children: u32,
}

pub struct AideSearch {
    ctx: SearchContext,
    params: AideParams,
    nodes: BTreeMap<CandidateId, AideNode>,
}

impl AideSearch {
    pub fn new(ctx: SearchContext, params: AideParams) -> Self {
        AideSearch {
            ctx,
            params,
            nodes: BTreeMap::new(),
        }
    }

    pub fn good_roots(&self) -> u32 {
        self.nodes
            .values()
            .filter(|n| n.is_root && n.status == NodeStatus::Good)
            .count() as u32
    }

    /// Buggy leaves still eligible for repair, in id order.
    pub fn debuggable_leaves(&self) -> Vec<CandidateId> {
        self.nodes
            .iter()
            .filter(|(_, n)| {
                n.status == NodeStatus::Buggy
                    && n.children == 0
                    && n.debug_depth <= self.params.max_debug_depth
            })
            .map(|(id, _)| *id)
            .collect()
    }

    fn best_good(&self) -> CandidateId {
        let direction = self.ctx.card.direction;
        let mut best: Option<(CandidateId, f64)> = None;
        for (id, n) in &self.nodes {
            if let (NodeStatus::Good, Some(v)) = (n.status, n.val) {
                if best.is_none_or(|(_, b)| direction.is_better(v, b)) {
                    best = Some((*id, v));
                }
            }
        }
        best.map_or(self.ctx.baseline_id, |(id, _)| id)
    }

    /// Policy with its two random draws made explicit: `debug_draw` is compared
    /// against `debug_prob`, `leaf_draw` in `[0, 1)` picks among buggy leaves.
    pub fn select(&self, debug_draw: f64, leaf_draw: f64) -> ProposalRequest {
        if self.good_roots() < self.params.num_drafts {
            return ProposalRequest::new(self.ctx.baseline_id, Directive::Draft);
        }
        if debug_draw < self.params.debug_prob {
            let leaves = self.debuggable_leaves();
            if !leaves.is_empty() {
                let i = ((leaf_draw * leaves.len() as f64) as usize).min(leaves.len() - 1);
                return ProposalRequest::new(leaves[i], Directive::Debug);
            }
        }
        ProposalRequest::new(self.best_good(), Directive::Refine)
    }
}

impl Strategy for AideSearch {
    fn name(&self) -> &'static str {
        "aide"
    }

    fn decide(&mut self, _step_index: u32, rng: &mut RunRng) -> Result<Decision> {
        let debug_draw: f64 = rng.gen();
        let leaf_draw: f64 = rng.gen();
        Ok(Decision::Propose(self.select(debug_draw, leaf_draw)))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        let is_root = obs.parent_id == self.ctx.baseline_id && obs.directive == Directive::Draft;
        let debug_depth = match (obs.directive, self.nodes.get_mut(&obs.parent_id)) {
            (Directive::Debug, Some(p)) => p.debug_depth + 1,
            _ => 0,
        };
        if let Some(p) = self.nodes.get_mut(&obs.parent_id) {
            p.children += 1;
        }
        self.nodes.insert(
            obs.candidate_id,
            AideNode {
                is_root,
                status: if obs.is_valid() {
                    NodeStatus::Good
                } else {
                    NodeStatus::Buggy
                },
                val: obs.val_metric,
                debug_depth,
                children: 0,
            },
        );
        Ok(())
    }
}
