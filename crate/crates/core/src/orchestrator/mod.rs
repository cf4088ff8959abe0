//! The search loop for one run, and experiment grids of many runs.

mod config;
mod grid;

pub use config::{AgentEntry, GenerateEntry, GridConfig, TaskEntry};
pub use grid::{
    execute_grid, parse_manifest, resolve_tasks, run_grid, write_manifest, GridRun, ManifestEntry,
    ResolvedTask, RunStatus,
};

use std::collections::BTreeMap;

use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::landscape::{random_walk_reach, Backend, Split};
use crate::metrics::normalized_improvement;
use crate::strategies::{Decision, Observation, SearchContext, StrategyConfig};
use crate::types::{
    select_best_validated, validation_value, Candidate, CandidateId, FailureKind, RunOutcome,
    RunTrajectory, StepRecord,
};
use crate::RunRng;

/// Steps of the random walk that calibrates a task's reach scale.
pub const CALIBRATION_STEPS: usize = 100;

const STREAM_PROPOSE: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_STRATEGY: u64 = 3;
const STREAM_TEST: u64 = 4;

/// Identity and budget of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub run_id: String,
    pub agent_id: String,
    pub task_id: String,
    pub round: u32,
    pub budget: u32,
    pub seed: u64,
    /// Reach normalization constant handed to strategies.
    pub reach_scale: f64,
}

/// `hash(master_seed, parts...)` truncated to 64 bits.
pub fn derive_seed(master_seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn run_seed(master_seed: u64, agent_id: &str, task_id: &str, round: u32) -> u64 {
    derive_seed(master_seed, &[agent_id, task_id, &round.to_string()])
}

pub fn run_id(agent_id: &str, task_id: &str, round: u32) -> String {
    format!("{agent_id}__{task_id}__r{round}")
}

fn stream(seed: u64, id: u64) -> RunRng {
    let mut rng = RunRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-task reach scale: the largest baseline distance of a random walk.
pub fn calibrate_reach(backend: &dyn Backend, master_seed: u64, task_id: &str) -> Result<f64> {
    let mut rng = RunRng::seed_from_u64(derive_seed(master_seed, &["calibration", task_id]));
    random_walk_reach(backend, CALIBRATION_STEPS, &mut rng)
}

fn failed_step(step_index: u32, baseline: CandidateId) -> StepRecord {
    StepRecord {
        step_index,
        candidate_id: baseline,
        val_metric: None,
        failure: FailureKind::ExecutionError,
        tokens_consumed: 0,
        elapsed: 0.0,
    }
}

/// Runs one strategy against one backend for `spec.budget` steps, then
/// evaluates the best-validated candidate once on the test split.
///
/// A backend error aborts the run. A strategy error turns every remaining
/// step into an `execution_error` record.
pub fn run_single(
    backend: &dyn Backend,
    strategy: &StrategyConfig,
    spec: &RunSpec,
) -> Result<(RunTrajectory, RunOutcome)> {
    if spec.budget == 0 {
        return Err(Error::Config("budget must be at least 1".into()));
    }
    let card = backend.card().clone();
    let baseline_id = CandidateId::BASELINE;
    let baseline_val = backend.baseline_val();
    let baseline_genotype = backend.baseline_genotype();
    let ctx = SearchContext {
        card: card.clone(),
        budget: spec.budget,
        baseline_id,
        baseline_val,
        baseline_genotype: baseline_genotype.clone(),
        reach_scale: spec.reach_scale,
    };
    let mut policy = strategy.build(ctx)?;
    let mut propose_rng = stream(spec.seed, STREAM_PROPOSE);
    let mut eval_rng = stream(spec.seed, STREAM_EVAL);
    let mut strategy_rng = stream(spec.seed, STREAM_STRATEGY);
    let mut test_rng = stream(spec.seed, STREAM_TEST);

    let mut candidates = BTreeMap::new();
    candidates.insert(
        baseline_id,
        Candidate {
            candidate_id: baseline_id,
            parent_id: None,
            genotype: baseline_genotype,
            created_step: 0,
        },
    );
    let mut steps = Vec::with_capacity(spec.budget as usize);
    let mut broken: Option<Error> = None;

    for step in 1..=spec.budget {
        if let Some(e) = &broken {
            log::debug!(
                "{}: step {step} skipped after strategy error: {e}",
                spec.run_id
            );
            steps.push(failed_step(step, baseline_id));
            continue;
        }
        let req = match policy.decide(step, &mut strategy_rng) {
            Ok(Decision::Propose(r)) => r,
            Ok(Decision::Stop) => break,
            Err(e) => {
                broken = Some(e);
                steps.push(failed_step(step, baseline_id));
                continue;
            }
        };
        let Some(parent) = candidates.get(&req.parent) else {
            broken = Some(Error::Strategy(format!("unknown parent {}", req.parent)));
            steps.push(failed_step(step, baseline_id));
            continue;
        };
        let child = backend.propose_child(&parent.genotype, req.directive, &mut propose_rng)?;
        let eval = backend.evaluate(&child, Split::Validation, &mut eval_rng)?;
        let id = CandidateId(step);
        candidates.insert(
            id,
            Candidate {
                candidate_id: id,
                parent_id: Some(req.parent),
                genotype: child.clone(),
                created_step: step,
            },
        );
        steps.push(StepRecord {
            step_index: step,
            candidate_id: id,
            val_metric: eval.value,
            failure: eval.failure,
            tokens_consumed: eval.tokens_consumed,
            elapsed: eval.elapsed,
        });
        let obs = Observation {
            step_index: step,
            candidate_id: id,
            parent_id: req.parent,
            directive: req.directive,
            genotype: child,
            val_metric: eval.value,
            failure: eval.failure,
        };
        if let Err(e) = policy.observe(&obs) {
            broken = Some(e);
        }
    }
    if let Some(e) = &broken {
        log::warn!("{}: strategy failed: {e}", spec.run_id);
    }

    let trajectory = RunTrajectory {
        run_id: spec.run_id.clone(),
        agent_id: spec.agent_id.clone(),
        task_id: spec.task_id.clone(),
        round: spec.round,
        budget_t: spec.budget,
        seed: spec.seed,
        card: card.clone(),
        baseline_id,
        baseline_val,
        steps,
        candidates,
    };
    trajectory.validate()?;

    let best = select_best_validated(&trajectory);
    let p_val = validation_value(&trajectory, best).unwrap_or(baseline_val);
    let test = backend.evaluate(
        &trajectory.candidates[&best].genotype,
        Split::Test,
        &mut test_rng,
    )?;
    let p_test = test.value.ok_or_else(|| {
        Error::Backend(format!(
            "test evaluation of {best} failed ({:?})",
            test.failure
        ))
    })?;
    let outcome = RunOutcome {
        best_validated_id: best,
        p_val,
        p_test,
        normalized_val: normalized_improvement(&card, p_val)?,
        normalized_test: normalized_improvement(&card, p_test)?,
        test_elapsed: test.elapsed,
    };
    Ok((trajectory, outcome))
}
