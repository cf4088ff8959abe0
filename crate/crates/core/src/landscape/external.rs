//! Black-box evaluator commands.
//!
//! The candidate genotype is handed to the command through the
//! `SEARCHLAB_GENOTYPE` environment variable (a JSON array) together with
//! `SEARCHLAB_SPLIT` (`validation` or `test`). The command prints a JSON
//! document on stdout; `metric_path` is a dot-separated path into it. An
//! optional boolean `constraint_violation` field at the top level flags a
//! task-specific constraint violation.

use std::collections::BTreeMap;
use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{default_mutation_scales, perturb, Backend, EvalResult, Split};
use crate::error::{Error, Result};
use crate::strategies::Directive;
use crate::types::{FailureKind, MetricDirection, TaskCard};
use crate::RunRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalTaskConfig {
    pub validation_cmd: String,
    pub test_cmd: String,
    pub metric_path: String,
    pub direction: MetricDirection,
    pub p_best: f64,
    #[serde(default)]
    pub p_worst: Option<f64>,
    pub p_baseline: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    pub dims: usize,
    /// Coordinates the proposal operator may change; all when absent.
    #[serde(default)]
    pub editable_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub baseline_genotype: Option<Vec<f64>>,
    #[serde(default = "default_mutation_scales")]
    pub mutation_scales: BTreeMap<Directive, f64>,
}

fn default_timeout() -> f64 {
    2400.0
}

#[derive(Debug, Clone)]
pub struct ExternalBackend {
    config: ExternalTaskConfig,
    card: TaskCard,
    baseline: Vec<f64>,
}

impl ExternalBackend {
    pub fn new(task_id: &str, config: ExternalTaskConfig) -> Result<Self> {
        let card = TaskCard::new(
            task_id,
            config.direction,
            config.p_best,
            config.p_worst,
            config.p_baseline,
        )?;
        if config.dims == 0 {
            return Err(Error::Config("external task needs dims >= 1".into()));
        }
        if !(config.timeout_secs > 0.0 && config.timeout_secs.is_finite()) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        if let Some(mask) = &config.editable_dims {
            if mask.is_empty() || mask.iter().any(|&i| i >= config.dims) {
                return Err(Error::Config("editable_dims out of range".into()));
            }
        }
        let baseline = config
            .baseline_genotype
            .clone()
            .unwrap_or_else(|| vec![0.0; config.dims]);
        if baseline.len() != config.dims {
            return Err(Error::DimensionMismatch {
                expected: config.dims,
                actual: baseline.len(),
            });
        }
        for d in Directive::ALL {
            if !config.mutation_scales.contains_key(&d) {
                return Err(Error::Config(format!("missing mutation scale for {d}")));
            }
        }
        Ok(ExternalBackend {
            config,
            card,
            baseline,
        })
    }

    /// Edits touching coordinates outside `editable_dims`.
    fn violates_scope(&self, x: &[f64]) -> bool {
        match &self.config.editable_dims {
            None => false,
            Some(mask) => x
                .iter()
                .zip(&self.baseline)
                .enumerate()
                .any(|(i, (a, b))| a != b && !mask.contains(&i)),
        }
    }

    fn run_command(&self, cmd: &str, x: &[f64], split: Split) -> Result<EvalResult> {
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty evaluator command".into()))?;
        let genotype = serde_json::to_string(x).expect("finite genotype serializes");
        let split_name = match split {
            Split::Validation => "validation",
            Split::Test => "test",
        };
        let start = Instant::now();
        let mut child = Command::new(program)
            .args(parts)
            .env("SEARCHLAB_GENOTYPE", genotype)
            .env("SEARCHLAB_SPLIT", split_name)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start `{program}`: {e}")))?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if start.elapsed() >= timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(Error::Backend(format!("waiting on `{program}`: {e}"))),
            }
        };
        let output = reader.join().unwrap_or_default();
        let elapsed = start.elapsed().as_secs_f64();
        let Some(status) = status else {
            return Ok(EvalResult::failed(FailureKind::Timeout, 0, elapsed));
        };
        if !status.success() {
            return Ok(EvalResult::failed(FailureKind::ExecutionError, 0, elapsed));
        }
        Ok(
            match parse_metric_output(&output, &self.config.metric_path) {
                MetricOutput::Value(v) => EvalResult::ok(v, 0, elapsed),
                MetricOutput::Violation => {
                    EvalResult::failed(FailureKind::ConstraintViolation, 0, elapsed)
                }
                MetricOutput::Invalid => EvalResult::failed(FailureKind::InvalidMetric, 0, elapsed),
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricOutput {
    Value(f64),
    Violation,
    Invalid,
}

/// Extracts the metric at `path` from an evaluator's JSON output. The whole
/// output is tried first, then its last non-empty line.
pub fn parse_metric_output(output: &str, path: &str) -> MetricOutput {
    let doc: serde_json::Value = match serde_json::from_str(output.trim()) {
        Ok(v) => v,
        Err(_) => match output
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .and_then(|l| serde_json::from_str(l.trim()).ok())
        {
            Some(v) => v,
            None => return MetricOutput::Invalid,
        },
    };
    if doc.get("constraint_violation").and_then(|v| v.as_bool()) == Some(true) {
        return MetricOutput::Violation;
    }
    let mut node = &doc;
    for key in path.split('.').filter(|k| !k.is_empty()) {
        let next = match node {
            serde_json::Value::Object(map) => map.get(key),
            serde_json::Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get(i)),
            _ => None,
        };
        match next {
            Some(n) => node = n,
            None => return MetricOutput::Invalid,
        }
    }
    match node.as_f64() {
        Some(v) if v.is_finite() => MetricOutput::Value(v),
        _ => MetricOutput::Invalid,
    }
}

impl Backend for ExternalBackend {
    fn card(&self) -> &TaskCard {
        &self.card
    }

    fn dims(&self) -> usize {
        self.config.dims
    }

    fn baseline_genotype(&self) -> Vec<f64> {
        self.baseline.clone()
    }

    fn baseline_val(&self) -> f64 {
        self.config.p_baseline
    }

    fn evaluate(&self, x: &[f64], split: Split, _rng: &mut RunRng) -> Result<EvalResult> {
        if x.len() != self.config.dims {
            return Err(Error::DimensionMismatch {
                expected: self.config.dims,
                actual: x.len(),
            });
        }
        if self.violates_scope(x) {
            return Ok(EvalResult::failed(FailureKind::ConstraintViolation, 0, 0.0));
        }
        let cmd = match split {
            Split::Validation => &self.config.validation_cmd,
            Split::Test => &self.config.test_cmd,
        };
        self.run_command(cmd, x, split)
    }

    fn propose_child(
        &self,
        parent: &[f64],
        directive: Directive,
        rng: &mut RunRng,
    ) -> Result<Vec<f64>> {
        perturb(
            parent,
            &self.baseline,
            directive,
            &self.config.mutation_scales,
            self.config.editable_dims.as_deref(),
            rng,
        )
    }
}
