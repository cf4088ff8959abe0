//! Task backends: the "execute experiment" half of the search loop.
//!
//! A [`Backend`] owns a task's normalization card, its baseline genotype, the
//! proposal operator that turns a (parent, directive) pair into a child
//! genotype, and the evaluator for the validation and test splits.

mod external;
mod synthetic;

pub use external::{parse_metric_output, ExternalBackend, ExternalTaskConfig, MetricOutput};
pub use synthetic::{
    generate_landscape, latent_fitness, ramp, Gate, LandscapeSpec, SyntheticBackend,
    DEFAULT_GATE_WIDTH,
};

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategies::Directive;
use crate::types::{FailureKind, TaskCard};
use crate::RunRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub value: Option<f64>,
    pub failure: FailureKind,
    pub tokens_consumed: u64,
    pub elapsed: f64,
}

impl EvalResult {
    pub fn ok(value: f64, tokens_consumed: u64, elapsed: f64) -> Self {
        EvalResult {
            value: Some(value),
            failure: FailureKind::None,
            tokens_consumed,
            elapsed,
        }
    }

    pub fn failed(failure: FailureKind, tokens_consumed: u64, elapsed: f64) -> Self {
        debug_assert!(failure != FailureKind::None);
        EvalResult {
            value: None,
            failure,
            tokens_consumed,
            elapsed,
        }
    }
}

/// A task the orchestrator can run strategies against.
///
/// `Err` from `evaluate` or `propose_child` is a backend configuration error
/// and aborts the run; ordinary experiment failures are reported through
/// [`EvalResult::failure`].
pub trait Backend: Send + Sync {
    fn card(&self) -> &TaskCard;
    fn dims(&self) -> usize;
    fn baseline_genotype(&self) -> Vec<f64>;
    fn baseline_val(&self) -> f64;
    fn evaluate(&self, x: &[f64], split: Split, rng: &mut RunRng) -> Result<EvalResult>;
    fn propose_child(
        &self,
        parent: &[f64],
        directive: Directive,
        rng: &mut RunRng,
    ) -> Result<Vec<f64>>;
}

/// Step sizes per directive.
pub fn default_mutation_scales() -> BTreeMap<Directive, f64> {
    BTreeMap::from([
        (Directive::Draft, 1.0),
        (Directive::Refine, 0.25),
        (Directive::PerturbWide, 2.0),
        (Directive::NewMechanism, 3.0),
        (Directive::Debug, 0.05),
    ])
}

/// Uniform random direction on the unit sphere restricted to `mask` (all
/// coordinates when `None`).
pub fn random_unit_vector(dims: usize, mask: Option<&[usize]>, rng: &mut RunRng) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; dims];
        match mask {
            Some(idx) => {
                for &i in idx {
                    v[i] = rng.sample(StandardNormal);
                }
            }
            None => v.iter_mut().for_each(|x| *x = rng.sample(StandardNormal)),
        }
        let norm = l2_norm(&v);
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `child = parent + sigma * eta` with `eta` a random unit vector.
/// `new_mechanism` ignores `parent` and restarts from `baseline`.
pub(crate) fn perturb(
    parent: &[f64],
    baseline: &[f64],
    directive: Directive,
    scales: &BTreeMap<Directive, f64>,
    mask: Option<&[usize]>,
    rng: &mut RunRng,
) -> Result<Vec<f64>> {
    if parent.len() != baseline.len() {
        return Err(Error::DimensionMismatch {
            expected: baseline.len(),
            actual: parent.len(),
        });
    }
    let sigma = *scales
        .get(&directive)
        .ok_or_else(|| Error::Config(format!("no mutation scale for directive {directive}")))?;
    let origin = if directive == Directive::NewMechanism {
        baseline
    } else {
        parent
    };
    let eta = random_unit_vector(parent.len(), mask, rng);
    Ok(origin
        .iter()
        .zip(&eta)
        .map(|(o, e)| o + sigma * e)
        .collect())
}

/// Largest distance from the baseline reached by a `steps`-long random walk of
/// `draft`-sized moves. Used as the per-task reach calibration constant.
pub fn random_walk_reach(backend: &dyn Backend, steps: usize, rng: &mut RunRng) -> Result<f64> {
    let base = backend.baseline_genotype();
    let mut x = base.clone();
    let mut reach: f64 = 0.0;
    for _ in 0..steps {
        x = backend.propose_child(&x, Directive::Draft, rng)?;
        let d = l2_norm(&x.iter().zip(&base).map(|(a, b)| a - b).collect::<Vec<_>>());
        reach = reach.max(d);
    }
    Ok(reach)
}
