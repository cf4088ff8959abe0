//! Domain values shared by every module, plus the two pipeline-contract
//! helpers: the unified metric display line and best-validated selection.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of improvement of a task's primary metric.
///
/// All comparisons between metric values go through this type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricDirection {
    Maximize,
    Minimize,
}

impl MetricDirection {
    /// `a` is strictly better than `b`.
    pub fn is_better(self, a: f64, b: f64) -> bool {
        match self {
            MetricDirection::Maximize => a > b,
            MetricDirection::Minimize => a < b,
        }
    }

    /// Maps a raw value onto a "higher is better" axis.
    pub fn orient(self, value: f64) -> f64 {
        match self {
            MetricDirection::Maximize => value,
            MetricDirection::Minimize => -value,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricDirection::Maximize => "maximize",
            MetricDirection::Minimize => "minimize",
        }
    }
}

impl fmt::Display for MetricDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maximize" => Ok(MetricDirection::Maximize),
            "minimize" => Ok(MetricDirection::Minimize),
            other => Err(Error::Config(format!("unknown metric direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Dense,
    Sparse,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Dense => "dense",
            Partition::Sparse => "sparse",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-task normalization constants.
///
/// `p_worst = None` marks an unbounded-worst task; normalization then uses the
/// baseline itself as the worst bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCard {
    pub task_id: String,
    pub direction: MetricDirection,
    pub p_best: f64,
    pub p_worst: Option<f64>,
    pub p_baseline: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_opp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
}

impl TaskCard {
    pub fn new(
        task_id: impl Into<String>,
        direction: MetricDirection,
        p_best: f64,
        p_worst: Option<f64>,
        p_baseline: f64,
    ) -> Result<Self> {
        let card = TaskCard {
            task_id: task_id.into(),
            direction,
            p_best,
            p_worst,
            p_baseline,
            phi_opp: None,
            partition: None,
        };
        card.validate()?;
        Ok(card)
    }

    /// Worst bound used in normalization.
    pub fn effective_worst(&self) -> f64 {
        self.p_worst.unwrap_or(self.p_baseline)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.p_best, self.p_baseline]
            .into_iter()
            .chain(self.p_worst)
            .all(f64::is_finite);
        if !finite {
            return Err(Error::Config(format!(
                "task `{}`: non-finite normalization constant",
                self.task_id
            )));
        }
        if let Some(worst) = self.p_worst {
            if !self.direction.is_better(self.p_best, worst) {
                return Err(Error::Config(format!(
                    "task `{}`: p_best {} must be better than p_worst {} when {}",
                    self.task_id, self.p_best, worst, self.direction
                )));
            }
            let lo = worst.min(self.p_best);
            let hi = worst.max(self.p_best);
            if self.p_baseline < lo || self.p_baseline > hi {
                return Err(Error::Config(format!(
                    "task `{}`: baseline {} outside [{lo}, {hi}]",
                    self.task_id, self.p_baseline
                )));
            }
        } else if self.direction.is_better(self.p_baseline, self.p_best) {
            return Err(Error::Config(format!(
                "task `{}`: baseline {} beats p_best {}",
                self.task_id, self.p_baseline, self.p_best
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(pub u32);

impl CandidateId {
    pub const BASELINE: CandidateId = CandidateId(0);
}

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A point in genotype space; the genotype doubles as the embedding used by
/// the exploration metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate_id: CandidateId,
    pub parent_id: Option<CandidateId>,
    pub genotype: Vec<f64>,
    pub created_step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    None,
    ExecutionError,
    Timeout,
    InvalidMetric,
    ConstraintViolation,
}

impl FailureKind {
    pub fn is_valid(self) -> bool {
        self == FailureKind::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: u32,
    pub candidate_id: CandidateId,
    pub val_metric: Option<f64>,
    pub failure: FailureKind,
    pub tokens_consumed: u64,
    pub elapsed: f64,
}

impl StepRecord {
    pub fn is_valid(&self) -> bool {
        self.failure.is_valid()
    }
}

/// Full per-step log of one (agent, task, round) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrajectory {
    pub run_id: String,
    pub agent_id: String,
    pub task_id: String,
    pub round: u32,
    pub budget_t: u32,
    pub seed: u64,
    pub card: TaskCard,
    pub baseline_id: CandidateId,
    pub baseline_val: f64,
    pub steps: Vec<StepRecord>,
    pub candidates: BTreeMap<CandidateId, Candidate>,
}

impl RunTrajectory {
    pub fn baseline(&self) -> &Candidate {
        &self.candidates[&self.baseline_id]
    }

    pub fn valid_steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.is_valid())
    }

    /// Genotypes of the candidates evaluated on failure-free steps, in step order.
    pub fn valid_embeddings(&self) -> Vec<&[f64]> {
        self.valid_steps()
            .map(|s| self.candidates[&s.candidate_id].genotype.as_slice())
            .collect()
    }

    /// Checks the structural invariants of a trajectory.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::UndefinedInput(format!("run {}: {msg}", self.run_id)));
        if !self.candidates.contains_key(&self.baseline_id) {
            return bad("baseline candidate missing".into());
        }
        if self.steps.len() > self.budget_t as usize {
            return bad(format!(
                "{} steps exceed budget {}",
                self.steps.len(),
                self.budget_t
            ));
        }
        let dims = self.baseline().genotype.len();
        for (i, step) in self.steps.iter().enumerate() {
            if step.step_index as usize != i + 1 {
                return bad(format!("step {} out of sequence", step.step_index));
            }
            if step.val_metric.is_some() != step.is_valid() {
                return bad(format!(
                    "step {}: metric presence disagrees with failure kind",
                    step.step_index
                ));
            }
            if !self.candidates.contains_key(&step.candidate_id) {
                return bad(format!("step {}: unknown candidate", step.step_index));
            }
        }
        for c in self.candidates.values() {
            if c.genotype.len() != dims {
                return bad(format!("candidate {} has wrong dimension", c.candidate_id));
            }
            match c.parent_id {
                None if c.candidate_id != self.baseline_id => {
                    return bad(format!("candidate {} has no parent", c.candidate_id))
                }
                Some(p) if p >= c.candidate_id || !self.candidates.contains_key(&p) => {
                    return bad(format!("candidate {} has invalid parent", c.candidate_id))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// End-of-run result: the best-validated candidate and its single test evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub best_validated_id: CandidateId,
    pub p_val: f64,
    pub p_test: f64,
    pub normalized_val: f64,
    pub normalized_test: f64,
    #[serde(default)]
    pub test_elapsed: f64,
}

/// Renders the unified one-line metric display.
///
/// `metric=<name> value=<6 significant figures> direction=<..> violation=<..>`
pub fn format_metric_display(
    name: &str,
    value: f64,
    direction: MetricDirection,
    violation: bool,
) -> Result<String> {
    Ok(format!(
        "metric={name} value={} direction={direction} violation={violation}",
        six_significant(value)?
    ))
}

fn six_significant(value: f64) -> Result<String> {
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    // -0.0 renders as 0
    let value = if value == 0.0 { 0.0 } else { value };
    let sci = format!("{value:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp <= 5 {
        let decimals = (5 - exp) as usize;
        return Ok(format!("{value:.decimals$}"));
    }
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", mantissa),
    };
    let mut out = String::from(sign);
    out.extend(digits.chars().filter(|c| *c != '.'));
    out.extend(std::iter::repeat_n('0', (exp - 5) as usize));
    Ok(out)
}

/// Best failure-free candidate in the task direction, baseline included.
/// Ties go to the earliest step; with no valid steps the baseline wins.
pub fn select_best_validated(trajectory: &RunTrajectory) -> CandidateId {
    let direction = trajectory.card.direction;
    let mut best = (trajectory.baseline_id, trajectory.baseline_val);
    for step in &trajectory.steps {
        if let (true, Some(v)) = (step.is_valid(), step.val_metric) {
            if direction.is_better(v, best.1) {
                best = (step.candidate_id, v);
            }
        }
    }
    best.0
}

/// Validation metric of a candidate as recorded in the trajectory.
pub fn validation_value(trajectory: &RunTrajectory, id: CandidateId) -> Option<f64> {
    if id == trajectory.baseline_id {
        return Some(trajectory.baseline_val);
    }
    trajectory
        .steps
        .iter()
        .find(|s| s.candidate_id == id && s.is_valid())
        .and_then(|s| s.val_metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(vals: &[Option<f64>], baseline_val: f64, direction: MetricDirection) -> RunTrajectory {
        let card = TaskCard {
            task_id: "t".into(),
            direction,
            p_best: if direction == MetricDirection::Maximize {
                1.0
            } else {
                0.0
            },
            p_worst: Some(if direction == MetricDirection::Maximize {
                0.0
            } else {
                1.0
            }),
            p_baseline: baseline_val,
            phi_opp: None,
            partition: None,
        };
        let mut candidates = BTreeMap::new();
        candidates.insert(
            CandidateId::BASELINE,
            Candidate {
                candidate_id: CandidateId::BASELINE,
                parent_id: None,
                genotype: vec![0.0, 0.0],
                created_step: 0,
            },
        );
        let mut steps = Vec::new();
        for (i, v) in vals.iter().enumerate() {
            let id = CandidateId(i as u32 + 1);
            candidates.insert(
                id,
                Candidate {
                    candidate_id: id,
                    parent_id: Some(CandidateId::BASELINE),
                    genotype: vec![i as f64, 1.0],
                    created_step: i as u32 + 1,
                },
            );
            steps.push(StepRecord {
                step_index: i as u32 + 1,
                candidate_id: id,
                val_metric: *v,
                failure: if v.is_some() {
                    FailureKind::None
                } else {
                    FailureKind::ExecutionError
                },
                tokens_consumed: 10,
                elapsed: 1.0,
            });
        }
        RunTrajectory {
            run_id: "r".into(),
            agent_id: "a".into(),
            task_id: "t".into(),
            round: 0,
            budget_t: vals.len() as u32,
            seed: 0,
            card,
            baseline_id: CandidateId::BASELINE,
            baseline_val,
            steps,
            candidates,
        }
    }

    #[test]
    fn display_lines() {
        assert_eq!(
            format_metric_display("acc", 0.5, MetricDirection::Maximize, false).unwrap(),
            "metric=acc value=0.500000 direction=maximize violation=false"
        );
        assert_eq!(
            format_metric_display("shd", 71.0, MetricDirection::Minimize, false).unwrap(),
            "metric=shd value=71.0000 direction=minimize violation=false"
        );
        let line =
            format_metric_display("auc_gap", 0.321, MetricDirection::Minimize, true).unwrap();
        assert!(line.ends_with("violation=true"));
        assert!(line.contains("value=0.321000"));
    }

    #[test]
    fn display_edges() {
        assert_eq!(six_significant(0.0).unwrap(), "0.00000");
        assert_eq!(six_significant(-0.0).unwrap(), "0.00000");
        assert_eq!(six_significant(9.9999996).unwrap(), "10.0000");
        assert_eq!(six_significant(1234567.0).unwrap(), "1234570");
        assert_eq!(six_significant(-0.000123456).unwrap(), "-0.000123456");
        assert_eq!(six_significant(166.80).unwrap(), "166.800");
        assert!(matches!(
            format_metric_display("x", f64::NAN, MetricDirection::Maximize, false),
            Err(Error::NonFinite(_))
        ));
        assert!(
            format_metric_display("x", f64::INFINITY, MetricDirection::Maximize, false).is_err()
        );
    }

    #[test]
    fn best_validated_picks_best() {
        let t = traj(
            &[Some(0.3), Some(0.5), Some(0.4)],
            0.1,
            MetricDirection::Maximize,
        );
        assert_eq!(select_best_validated(&t), CandidateId(2));
        let t = traj(
            &[Some(0.3), Some(0.05), Some(0.4)],
            0.1,
            MetricDirection::Minimize,
        );
        assert_eq!(select_best_validated(&t), CandidateId(2));
    }

    #[test]
    fn best_validated_tie_goes_to_earliest() {
        let t = traj(&[Some(0.5), Some(0.5)], 0.1, MetricDirection::Maximize);
        assert_eq!(select_best_validated(&t), CandidateId(1));
        // baseline ties are won by the baseline
        let t = traj(&[Some(0.1)], 0.1, MetricDirection::Maximize);
        assert_eq!(select_best_validated(&t), CandidateId::BASELINE);
    }

    #[test]
    fn best_validated_all_failed_returns_baseline() {
        let t = traj(&[None, None, None], 0.287, MetricDirection::Maximize);
        assert_eq!(select_best_validated(&t), CandidateId::BASELINE);
        assert_eq!(validation_value(&t, CandidateId::BASELINE), Some(0.287));
    }

    #[test]
    fn card_invariants() {
        assert!(TaskCard::new("a", MetricDirection::Maximize, 1.0, Some(0.0), 0.3).is_ok());
        assert!(TaskCard::new("a", MetricDirection::Maximize, 0.0, Some(1.0), 0.3).is_err());
        assert!(TaskCard::new("a", MetricDirection::Minimize, 0.0, Some(0.5), 0.321).is_ok());
        assert!(TaskCard::new("a", MetricDirection::Maximize, 1.0, Some(0.0), 1.3).is_err());
        let unbounded = TaskCard::new("u", MetricDirection::Minimize, 0.0, None, 166.8).unwrap();
        assert_eq!(unbounded.effective_worst(), 166.8);
    }

    #[test]
    fn trajectory_validation() {
        let mut t = traj(&[Some(0.3), None], 0.1, MetricDirection::Maximize);
        assert!(t.validate().is_ok());
        t.steps[1].val_metric = Some(0.2);
        assert!(t.validate().is_err());
        let mut t = traj(&[Some(0.3), None], 0.1, MetricDirection::Maximize);
        t.steps[1].step_index = 5;
        assert!(t.validate().is_err());
    }
}
