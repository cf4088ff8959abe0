//! Search policies.
//!
//! Every policy sits behind [`Strategy`]: the driver calls [`Strategy::decide`]
//! to get the next (parent, directive) request, executes it, and reports the
//! validation-only result back through [`Strategy::observe`]. Strategies never
//! see test-split values.

mod adaptive;
mod aide;
mod bfts;
mod evolve;
mod greedy;
mod parallel_linear;
mod uct;

pub use adaptive::{
    adaptive_transition_check, branch_count, stagnation_diagnose, AdaptiveParams, AdaptiveSearch,
    Guidance, Phase, StagnationThresholds,
};
pub use aide::{AideParams, AideSearch};
pub use bfts::{stage_boundaries, stage_of, BftsParams, BftsSearch, NodeStatus, TreeNode};
pub use evolve::{parent_mode, EvolveParams, EvolveSearch, ParentMode};
pub use greedy::{GreedyParams, GreedySearch, HillClimber};
pub use parallel_linear::{ParallelLinearParams, ParallelLinearSearch};
pub use uct::{normalize_fitness, ucb_select, UctParams, UctSearch};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CandidateId, FailureKind, TaskCard};
use crate::RunRng;

/// What kind of modification the proposal operator should make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Draft,
    Refine,
    PerturbWide,
    NewMechanism,
    Debug,
}

impl Directive {
    pub const ALL: [Directive; 5] = [
        Directive::Draft,
        Directive::Refine,
        Directive::PerturbWide,
        Directive::NewMechanism,
        Directive::Debug,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Directive::Draft => "draft",
            Directive::Refine => "refine",
            Directive::PerturbWide => "perturb_wide",
            Directive::NewMechanism => "new_mechanism",
            Directive::Debug => "debug",
        }
    }
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Directive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Directive::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown directive `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalRequest {
    pub parent: CandidateId,
    pub directive: Directive,
    /// Advisory text forwarded to external proposal generators; ignored by
    /// synthetic backends.
    pub context: Option<String>,
}

impl ProposalRequest {
    pub fn new(parent: CandidateId, directive: Directive) -> Self {
        ProposalRequest {
            parent,
            directive,
            context: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Propose(ProposalRequest),
    Stop,
}

/// Validation-side result of one executed step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step_index: u32,
    pub candidate_id: CandidateId,
    pub parent_id: CandidateId,
    pub directive: Directive,
    pub genotype: Vec<f64>,
    pub val_metric: Option<f64>,
    pub failure: FailureKind,
}

impl Observation {
    pub fn is_valid(&self) -> bool {
        self.failure.is_valid() && self.val_metric.is_some()
    }
}

/// Run-level facts a strategy may read.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchContext {
    pub card: TaskCard,
    pub budget: u32,
    pub baseline_id: CandidateId,
    pub baseline_val: f64,
    pub baseline_genotype: Vec<f64>,
    /// Reach calibration constant used to normalize exploration reach.
    pub reach_scale: f64,
}

pub trait Strategy: Send {
    fn name(&self) -> &'static str;
    fn decide(&mut self, step_index: u32, rng: &mut RunRng) -> Result<Decision>;
    fn observe(&mut self, obs: &Observation) -> Result<()>;
}

/// Per-agent strategy block of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum StrategyConfig {
    Greedy(GreedyParams),
    ParallelLinear(ParallelLinearParams),
    Bfts(BftsParams),
    Aide(AideParams),
    Uct(UctParams),
    Evolve(EvolveParams),
    Adaptive(AdaptiveParams),
}

impl StrategyConfig {
    pub const NAMES: [&'static str; 7] = [
        "greedy",
        "parallel_linear",
        "bfts",
        "aide",
        "uct",
        "evolve",
        "adaptive",
    ];

    /// Default configuration for a strategy name.
    pub fn default_for(name: &str) -> Result<Self> {
        Ok(match name {
            "greedy" => StrategyConfig::Greedy(GreedyParams::default()),
            "parallel_linear" => StrategyConfig::ParallelLinear(ParallelLinearParams::default()),
            "bfts" => StrategyConfig::Bfts(BftsParams::default()),
            "aide" => StrategyConfig::Aide(AideParams::default()),
            "uct" => StrategyConfig::Uct(UctParams::default()),
            "evolve" => StrategyConfig::Evolve(EvolveParams::default()),
            "adaptive" => StrategyConfig::Adaptive(AdaptiveParams::default()),
            other => return Err(Error::Config(format!("unknown strategy `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyConfig::Greedy(_) => "greedy",
            StrategyConfig::ParallelLinear(_) => "parallel_linear",
            StrategyConfig::Bfts(_) => "bfts",
            StrategyConfig::Aide(_) => "aide",
            StrategyConfig::Uct(_) => "uct",
            StrategyConfig::Evolve(_) => "evolve",
            StrategyConfig::Adaptive(_) => "adaptive",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyConfig::Greedy(_) => Ok(()),
            StrategyConfig::ParallelLinear(p) => p.validate(),
            StrategyConfig::Bfts(p) => p.validate(),
            StrategyConfig::Aide(p) => p.validate(),
            StrategyConfig::Uct(p) => p.validate(),
            StrategyConfig::Evolve(p) => p.validate(),
            StrategyConfig::Adaptive(p) => p.validate(),
        }
    }

    pub fn build(&self, ctx: SearchContext) -> Result<Box<dyn Strategy>> {
        self.validate()?;
        Ok(match self {
            StrategyConfig::Greedy(p) => Box::new(GreedySearch::new(ctx, p.clone())),
            StrategyConfig::ParallelLinear(p) => {
                Box::new(ParallelLinearSearch::new(ctx, p.clone()))
            }
            StrategyConfig::Bfts(p) => Box::new(BftsSearch::new(ctx, p.clone())),
            StrategyConfig::Aide(p) => Box::new(AideSearch::new(ctx, p.clone())),
            StrategyConfig::Uct(p) => Box::new(UctSearch::new(ctx, p.clone())),
            StrategyConfig::Evolve(p) => Box::new(EvolveSearch::new(ctx, p.clone())),
            StrategyConfig::Adaptive(p) => Box::new(AdaptiveSearch::new(ctx, p.clone())),
        })
    }
}
