//! Island-model MAP-Elites with ring migration.
//!
//! Each island keeps a 5×5 behaviour grid indexed by (binned distance of the
//! genotype from the baseline, binned distance to the parent). Islands take
//! turns round-robin. A flat global archive of the best programs backs the
//! exploitation parent mode.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Decision, Directive, Observation, ProposalRequest, SearchContext, Strategy};
use crate::error::{Error, Result};
use crate::landscape::l2_norm;
use crate::metrics::normalized_improvement;
use crate::types::CandidateId;
use crate::RunRng;

pub const GRID_BINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveParams {
    pub islands: u32,
    pub migration_interval: u32,
    pub archive_size: usize,
    /// Width of each genotype-norm bin; the last bin is open-ended.
    pub norm_bin_width: f64,
    /// Upper edges of the first four distance-to-parent bins.
    pub distance_edges: [f64; 4],
}

impl Default for EvolveParams {
    fn default() -> Self {
        EvolveParams {
            islands: 3,
            migration_interval: 10,
            archive_size: 20,
            norm_bin_width: 1.0,
            distance_edges: [0.1, 0.5, 1.5, 2.5],
        }
    }
}

impl EvolveParams {
    pub fn validate(&self) -> Result<()> {
        let edges_ok =
            self.distance_edges.windows(2).all(|w| w[0] < w[1]) && self.distance_edges[0] > 0.0;
        if self.islands < 2
            || self.migration_interval == 0
            || self.archive_size == 0
            || !(self.norm_bin_width > 0.0)
            || !edges_ok
        {
            return Err(Error::Config(
                "evolve: need islands >= 2, migration_interval >= 1, archive_size >= 1, \
                 norm_bin_width > 0 and increasing positive distance edges"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentMode {
    Exploration,
    Exploitation,
    Weighted,
}

/// Mixture draw: 20% exploration, 70% exploitation, 10% weighted.
pub fn parent_mode(u: f64) -> ParentMode {
    if u < 0.2 {
        ParentMode::Exploration
    } else if u < 0.9 {
        ParentMode::Exploitation
    } else {
        ParentMode::Weighted
    }
}

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub id: CandidateId,
    pub val: f64,
    /// Normalized improvement, used for weighting and ordering.
    pub fitness: f64,
    pub cell: Cell,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Island {
    pub grid: BTreeMap<Cell, Elite>,
    pub generation: u32,
}

impl Island {
    /// Cell-elitist placement; returns whether the newcomer was kept.
    pub fn place(&mut self, elite: Elite) -> bool {
        match self.grid.get(&elite.cell) {
            Some(cur) if elite.fitness <= cur.fitness => false,
            _ => {
                self.grid.insert(elite.cell, elite);
                true
            }
        }
    }

    /// Best elite; lowest cell wins ties.
    pub fn top(&self) -> Option<&Elite> {
        self.grid
            .values()
            .fold(None, |best: Option<&Elite>, e| match best {
                Some(b) if e.fitness <= b.fitness => Some(b),
                _ => Some(e),
            })
    }
}

pub struct EvolveSearch {
    ctx: SearchContext,
    params: EvolveParams,
    islands: Vec<Island>,
    archive: Vec<Elite>,
    genotypes: HashMap<CandidateId, Vec<f64>>,
    turn: usize,
}

impl EvolveSearch {
    pub fn new(ctx: SearchContext, params: EvolveParams) -> Self {
        let mut genotypes = HashMap::new();
        genotypes.insert(ctx.baseline_id, ctx.baseline_genotype.clone());
        EvolveSearch {
            islands: vec![Island::default(); params.islands as usize],
            ctx,
            params,
            archive: Vec::new(),
            genotypes,
            turn: 0,
        }
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn archive(&self) -> &[Elite] {
        &self.archive
    }

    pub fn current_island(&self) -> usize {
        self.turn % self.islands.len()
    }

    pub fn cell_for(&self, genotype: &[f64], parent: &[f64]) -> Cell {
        let from_base: Vec<f64> = genotype
            .iter()
            .zip(&self.ctx.baseline_genotype)
            .map(|(a, b)| a - b)
            .collect();
        let to_parent: Vec<f64> = genotype.iter().zip(parent).map(|(a, b)| a - b).collect();
        let n = l2_norm(&from_base) / self.params.norm_bin_width;
        let norm_bin = if n.is_finite() {
            (n as usize).min(GRID_BINS - 1)
        } else {
            GRID_BINS - 1
        };
        let d = l2_norm(&to_parent);
        let dist_bin = self
            .params
            .distance_edges
            .iter()
            .position(|&e| d < e)
            .unwrap_or(GRID_BINS - 1);
        (norm_bin, dist_bin)
    }

    fn archive_insert(&mut self, elite: Elite) {
        if self.archive.iter().any(|e| e.id == elite.id) {
            return;
        }
        let pos = self.archive.partition_point(|e| e.fitness >= elite.fitness);
        self.archive.insert(pos, elite);
        self.archive.truncate(self.params.archive_size);
    }

    fn migrate(&mut self, from: usize) {
        let Some(top) = self.islands[from].top().cloned() else {
            return;
        };
        let n = self.islands.len();
        for to in [(from + 1) % n, (from + n - 1) % n] {
            if to != from {
                self.islands[to].place(top.clone());
            }
        }
    }

    /// Parent for the current island given the mode draw `u` and an index draw `v` in [0, 1).
    pub fn select(&self, u: f64, v: f64) -> ProposalRequest {
        let island = &self.islands[self.current_island()];
        if island.grid.is_empty() {
            return ProposalRequest::new(self.ctx.baseline_id, Directive::Draft);
        }
        let members: Vec<&Elite> = island.grid.values().collect();
        let pick = |len: usize| ((v * len as f64) as usize).min(len - 1);
        let parent = match parent_mode(u) {
            ParentMode::Exploitation if !self.archive.is_empty() => {
                self.archive[pick(self.archive.len())].id
            }
            ParentMode::Exploration | ParentMode::Exploitation => members[pick(members.len())].id,
            ParentMode::Weighted => {
                let weights: Vec<f64> = members.iter().map(|e| e.fitness.max(0.0) + 1e-6).collect();
                let total: f64 = weights.iter().sum();
                let mut target = v * total;
                let mut chosen = members.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if target < *w {
                        chosen = i;
                        break;
                    }
                    target -= w;
                }
                members[chosen].id
            }
        };
        ProposalRequest::new(parent, Directive::Refine)
    }
}

impl Strategy for EvolveSearch {
    fn name(&self) -> &'static str {
        "evolve"
    }

    fn decide(&mut self, _step_index: u32, rng: &mut RunRng) -> Result<Decision> {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        Ok(Decision::Propose(self.select(u, v)))
    }

    fn observe(&mut self, obs: &Observation) -> Result<()> {
        let at = self.current_island();
        self.turn += 1;
        self.genotypes
            .insert(obs.candidate_id, obs.genotype.clone());
        if let (true, Some(val)) = (obs.is_valid(), obs.val_metric) {
            let parent = self
                .genotypes
                .get(&obs.parent_id)
                .cloned()
                .unwrap_or_else(|| self.ctx.baseline_genotype.clone());
            let elite = Elite {
                id: obs.candidate_id,
                val,
                fitness: normalized_improvement(&self.ctx.card, val).unwrap_or(0.0),
                cell: self.cell_for(&obs.genotype, &parent),
            };
            self.islands[at].place(elite.clone());
            self.archive_insert(elite);
        }
        let island = &mut self.islands[at];
        island.generation += 1;
        if island
            .generation
            .is_multiple_of(self.params.migration_interval)
        {
            self.migrate(at);
        }
        Ok(())
    }
}
