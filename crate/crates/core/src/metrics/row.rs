use serde::{Deserialize, Serialize};

use super::{
    auc_over_steps, effective_dim, exploration_reach, exploration_spread, exploration_uniqueness,
    improvement_steps, normalized_val_series, opportunity_density, opportunity_steps, val_test_gap,
    valid_step_ratio,
};
use crate::error::{Error, Result};
use crate::types::{RunOutcome, RunTrajectory};

/// One run's metrics. `None` is an undefined value (empty CSV field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub agent_id: String,
    pub task_id: String,
    pub round: u32,
    pub budget_t: u32,
    pub n_valid: u32,
    pub exploration_spread: Option<f64>,
    pub exploration_reach: Option<f64>,
    pub exploration_uniqueness: Option<f64>,
    pub effective_dim: Option<f64>,
    pub valid_step_ratio: f64,
    pub val_test_gap: f64,
    pub val_test_gap_signed: f64,
    pub auc_over_steps: f64,
    pub first_improvement_step: Option<u32>,
    pub best_improvement_step: u32,
    pub late_gain_fraction: Option<f64>,
    pub token_cost: u64,
    pub wall_clock: f64,
    pub opp_density: f64,
    pub normalized_val: f64,
    pub normalized_test: f64,
    pub p_val: f64,
    pub p_test: f64,
}

pub const METRICS_HEADER: &str = "run_id,agent_id,task_id,round,budget_t,n_valid,\
exploration_spread,exploration_reach,exploration_uniqueness,effective_dim,valid_step_ratio,\
val_test_gap,val_test_gap_signed,auc_over_steps,first_improvement_step,best_improvement_step,\
late_gain_fraction,token_cost,wall_clock,opp_density,normalized_val,normalized_test,p_val,p_test";

impl MetricsRow {
    /// Numeric value of a column by header name; `None` when undefined or not numeric.
    pub fn value(&self, column: &str) -> Option<f64> {
        Some(match column {
            "round" => self.round as f64,
            "budget_t" => self.budget_t as f64,
            "n_valid" => self.n_valid as f64,
            "exploration_spread" => self.exploration_spread?,
            "exploration_reach" => self.exploration_reach?,
            "exploration_uniqueness" => self.exploration_uniqueness?,
            "effective_dim" => self.effective_dim?,
            "valid_step_ratio" => self.valid_step_ratio,
            "val_test_gap" => self.val_test_gap,
            "val_test_gap_signed" => self.val_test_gap_signed,
            "auc_over_steps" => self.auc_over_steps,
            "first_improvement_step" => self.first_improvement_step? as f64,
            "best_improvement_step" => self.best_improvement_step as f64,
            "late_gain_fraction" => self.late_gain_fraction?,
            "token_cost" => self.token_cost as f64,
            "wall_clock" => self.wall_clock,
            "opp_density" => self.opp_density,
            "normalized_val" => self.normalized_val,
            "normalized_test" => self.normalized_test,
            "p_val" => self.p_val,
            "p_test" => self.p_test,
            _ => return None,
        })
    }
}

/// The twelve process metrics, in table order.
pub const PROCESS_METRICS: [&str; 12] = [
    "exploration_spread",
    "exploration_reach",
    "exploration_uniqueness",
    "effective_dim",
    "valid_step_ratio",
    "val_test_gap",
    "auc_over_steps",
    "first_improvement_step",
    "best_improvement_step",
    "late_gain_fraction",
    "token_cost",
    "wall_clock",
];

pub fn compute_row(trajectory: &RunTrajectory, outcome: &RunOutcome) -> Result<MetricsRow> {
    let embeddings: Vec<Vec<f64>> = trajectory
        .valid_embeddings()
        .into_iter()
        .map(<[f64]>::to_vec)
        .collect();
    let series = normalized_val_series(trajectory)?;
    let t = trajectory.budget_t;
    let steps = improvement_steps(&series, t);
    let (signed, absolute) = val_test_gap(outcome);
    Ok(MetricsRow {
        run_id: trajectory.run_id.clone(),
        agent_id: trajectory.agent_id.clone(),
        task_id: trajectory.task_id.clone(),
        round: trajectory.round,
        budget_t: t,
        n_valid: embeddings.len() as u32,
        exploration_spread: exploration_spread(&embeddings),
        exploration_reach: exploration_reach(&embeddings, &trajectory.baseline().genotype),
        exploration_uniqueness: exploration_uniqueness(&embeddings),
        effective_dim: effective_dim(&embeddings),
        valid_step_ratio: valid_step_ratio(trajectory),
        val_test_gap: absolute,
        val_test_gap_signed: signed,
        auc_over_steps: auc_over_steps(&series, t),
        first_improvement_step: steps.first,
        best_improvement_step: steps.best,
        late_gain_fraction: steps.late_gain,
        token_cost: trajectory.steps.iter().map(|s| s.tokens_consumed).sum(),
        wall_clock: trajectory.steps.iter().map(|s| s.elapsed).sum::<f64>() + outcome.test_elapsed,
        opp_density: opportunity_density(&opportunity_steps(trajectory)?),
        normalized_val: outcome.normalized_val,
        normalized_test: outcome.normalized_test,
        p_val: outcome.p_val,
        p_test: outcome.p_test,
    })
}

pub fn write_metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
    }
    let body = w.into_inner().map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    out.push_str(&String::from_utf8(body).expect("csv writer emits utf-8"));
    Ok(out)
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "metrics header does not match".into(),
            })
        }
    }
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<MetricsRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse {
            line: i + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}
