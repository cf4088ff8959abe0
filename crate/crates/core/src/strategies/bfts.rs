//! Staged best-first tree search with an advisory journal.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Decision, Directive, Observation, ProposalRequest, SearchContext, Strategy};
use crate::error::{Error, Result};
use crate::types::CandidateId;
use crate::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Good,
    Buggy,
    Unexpanded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<CandidateId>,
    pub val: Option<f64>,
    pub status: NodeStatus,
    pub depth: u32,
    pub stage: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BftsParams {
    /// Budget share of each stage, in stage order.
    pub stage_ratios: [f64; 4],
    /// Number of journal entries attached to each request.
    pub journal_len: usize,
}

impl Default for BftsParams {
    fn default() -> Self {
        BftsParams {
            stage_ratios: [0.10, 0.20, 0.50, 0.20],
            journal_len: 8,
        }
    }
}

impl BftsParams {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.stage_ratios.iter().sum();
        if self.stage_ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "bfts: stage ratios must be non-negative and sum to 1, got {:?}",
                self.stage_ratios
            )));
        }
        Ok(())
    }
}

/// Last step index of each stage. Cumulative ratios are rounded to the
/// nearest step; the final boundary is always `budget`.
pub fn stage_boundaries(budget: u32, ratios: &[f64; 4]) -> [u32; 4] {
    // work in integer millionths so 0.1 + 0.2 lands exactly on 0.3
    let micro: Vec<u64> = ratios.iter().map(|r| (r * 1e6).round() as u64).collect();
    let total: u64 = micro.iter().sum();
    let mut out = [0u32; 4];
    let mut cum = 0u64;
    for (i, m) in micro.iter().enumerate() {
        cum += m;
        let b = (budget as u64 * cum * 2 + total) / (2 * total);
        out[i] = b as u32;
    }
    out[3] = budget;
    out
}

/// Stage (1-based) that owns `step_index`.
pub fn stage_of(step_index: u32, boundaries: &[u32; 4]) -> u8 {
    boundaries
        .iter()
        .position(|&b| step_index <= b)
        .map_or(4, |i| i as u8 + 1)
}

fn stage_directive(stage: u8) -> Directive {
    match stage {
        1 => Directive::Draft,
        2 => Directive::Refine,
        3 => Directive::NewMechanism,
        _ => Directive::Refine,
    }
}

pub struct BftsSearch {
    ctx: SearchContext,
    params: BftsParams,
    boundaries: [u32; 4],
    nodes: BTreeMap<CandidateId, TreeNode>,
    journal: VecDeque<String>,
}

impl BftsSearch {
    pub fn new(ctx: SearchContext, params: BftsParams) -> Self {
        let boundaries = stage_boundaries(ctx.budget, &params.stage_ratios);
        let mut nodes = BTreeMap::new();
        nodes.insert(
            ctx.baseline_id,
            TreeNode {
                parent: None,
                val: Some(ctx.baseline_val),
                status: NodeStatus::Good,
                depth: 0,
                stage: 1,
            },
        );
        BftsSearch {
            ctx,
            params,
            boundaries,
            nodes,
            journal: VecDeque::new(),
        }
    }

    pub fn boundaries(&self) -> [u32; 4] {
        self.boundaries
    }

    pub fn nodes(&self) -> &BTreeMap<CandidateId, TreeNode> {
        &self.nodes
    }

    /// Best failure-free node of stages up to `stage`; earliest wins ties.
    pub fn best_node(&self, stage: u8) -> CandidateId {
        let direction = self.ctx.card.direction;
        let mut best: Option<(CandidateId, f64)> = None;
        for (id, n) in &self.nodes {
            if n.status != NodeStatus::Good || n.stage > stage {
                continue;
            }
            if let Some(v) = n.val {
                if best.is_none_or(|(_, b)| direction.is_better(v, b)) {
                    best = Some((*id, v));
                }
            }
        }
        best.map_or(self.ctx.baseline_id, |(id, _)| id)
    }

    fn journal_text(&self) -> String {
        self.journal.iter().cloned().collect::<Vec<_>>().join("\n")
    }
}

impl Strategy for BftsSearch {
    fn name(&self) -> &'static str {
        "bfts"
    }

    fn decide(&mut self, step_index: u32, _rng: &mut RunRng) -> Result<Decision> {
        let stage = stage_of(step_index, &self.boundaries);
        let mut req = ProposalRequest::new(self.best_node(stage), stage_directive(stage));
        if !self.journal.is_empty() {
            req.context = Some(self.journal_text());
        }
        Ok(Decision::Propose(req))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        let stage = stage_of(obs.step_index, &self.boundaries);
        let depth = self.nodes.get(&obs.parent_id).map_or(0, |p| p.depth) + 1;
        let status = if obs.is_valid() {
            NodeStatus::Good
        } else {
            NodeStatus::Buggy
        };
        self.nodes.insert(
            obs.candidate_id,
            TreeNode {
                parent: Some(obs.parent_id),
                val: obs.val_metric,
                status,
                depth,
                stage,
            },
        );
        let entry = match obs.val_metric {
            Some(v) => format!(
                "{} stage={stage} {} from {}: accepted val={v:.6}",
                obs.candidate_id, obs.directive, obs.parent_id
            ),
            None => format!(
                "{} stage={stage} {} from {}: failed ({:?})",
                obs.candidate_id, obs.directive, obs.parent_id, obs.failure
            ),
        };
        self.journal.push_back(entry);
        while self.journal.len() > self.params.journal_len {
            self.journal.pop_front();
        }
        Ok(())
    }
}
