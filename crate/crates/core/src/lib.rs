//! Search-strategy laboratory.
//!
//! Seven research-agent search policies (greedy hill climbing, parallel linear
//! idea chains, staged best-first tree search, solution-space tree search with
//! stochastic debugging, UCT, island MAP-Elites and an adaptive greedy/multi-branch
//! switcher) run against synthetic improvement landscapes whose opportunity
//! density is a tunable parameter. Every run is logged step by step, and the
//! logs feed a set of process-level metrics and rank-correlation analyses.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`]: domain values shared everywhere (task cards, candidates, step
//!   records, trajectories) and the pipeline contract helpers.
//! - [`landscape`]: synthetic backends and the external evaluator adapter.
//! - [`strategies`]: the search policies behind one [`strategies::Strategy`] trait.
//! - [`orchestrator`]: single-run loop, experiment grids, run configuration.
//! - [`metrics`]: final and process-level metrics per run.
//! - [`analysis`]: Spearman correlation, density partition, aggregation,
//!   convergence curves and fingerprints.
//! - [`report`]: SVG plots with CSV data twins.

// `!(x > 0.0)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cards;
pub mod error;
pub mod landscape;
pub mod log;
pub mod metrics;
pub mod orchestrator;
pub mod report;
pub mod strategies;
pub mod types;

pub use error::{Error, Result};

/// Random stream used for every run-level draw.
pub type RunRng = rand_chacha::ChaCha8Rng;

pub use types::{
    Candidate, CandidateId, FailureKind, MetricDirection, Partition, RunOutcome, RunTrajectory,
    StepRecord, TaskCard,
};
