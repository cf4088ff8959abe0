//! Line-delimited trajectory logs.
//!
//! One JSON object per line, tagged by `type`:
//!
//! ```text
//! {"type":"header","v":"v1","run_id":...,"card":{...},"baseline_id":0,"baseline_val":...}
//! {"type":"candidate","candidate_id":0,"parent_id":null,"genotype":[...],"created_step":0}
//! {"type":"candidate","candidate_id":1,...,"created_step":1}
//! {"type":"step","step_index":1,"candidate_id":1,"val_metric":0.31,"failure":"none",...}
//! ...
//! {"type":"outcome","best_validated_id":7,"p_val":...,"p_test":...,...}
//! ```
//!
//! Candidates created at step `k` are written immediately before step `k`.
//! The outcome line is written once, after the last step.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Candidate, CandidateId, RunOutcome, RunTrajectory, StepRecord, TaskCard};

pub const SCHEMA_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub v: String,
    pub run_id: String,
    pub agent_id: String,
    pub task_id: String,
    pub round: u32,
    pub budget_t: u32,
    pub seed: u64,
    pub card: TaskCard,
    pub baseline_id: CandidateId,
    pub baseline_val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(RunHeader),
    Candidate(Candidate),
    Step(StepRecord),
    Outcome(RunOutcome),
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log records always serialize")
    }
}

pub fn header_of(t: &RunTrajectory) -> RunHeader {
    RunHeader {
        v: SCHEMA_VERSION.to_string(),
        run_id: t.run_id.clone(),
        agent_id: t.agent_id.clone(),
        task_id: t.task_id.clone(),
        round: t.round,
        budget_t: t.budget_t,
        seed: t.seed,
        card: t.card.clone(),
        baseline_id: t.baseline_id,
        baseline_val: t.baseline_val,
    }
}

/// Serializes a trajectory (and its outcome, once known) to log text.
pub fn write_log(trajectory: &RunTrajectory, outcome: Option<&RunOutcome>) -> String {
    let mut by_step: BTreeMap<u32, Vec<&Candidate>> = BTreeMap::new();
    for c in trajectory.candidates.values() {
        by_step.entry(c.created_step).or_default().push(c);
    }
    let mut lines: Vec<LogRecord> = vec![LogRecord::Header(header_of(trajectory))];
    let take =
        |step: u32, by_step: &mut BTreeMap<u32, Vec<&Candidate>>, lines: &mut Vec<LogRecord>| {
            for c in by_step.remove(&step).unwrap_or_default() {
                lines.push(LogRecord::Candidate(c.clone()));
            }
        };
    take(0, &mut by_step, &mut lines);
    for step in &trajectory.steps {
        take(step.step_index, &mut by_step, &mut lines);
        lines.push(LogRecord::Step(step.clone()));
    }
    // candidates created after the last logged step, if any
    let rest: Vec<u32> = by_step.keys().copied().collect();
    for k in rest {
        take(k, &mut by_step, &mut lines);
    }
    if let Some(o) = outcome {
        lines.push(LogRecord::Outcome(o.clone()));
    }
    let mut out = String::new();
    for rec in &lines {
        out.push_str(&rec.to_line());
        out.push('\n');
    }
    out
}

/// Parses log text back into a trajectory and optional outcome.
pub fn parse_log(text: &str) -> Result<(RunTrajectory, Option<RunOutcome>)> {
    let mut header: Option<RunHeader> = None;
    let mut steps = Vec::new();
    let mut candidates = BTreeMap::new();
    let mut outcome = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let fail = |message: &str| Error::Parse {
            line: line_no,
            message: message.to_string(),
        };
        if outcome.is_some() {
            return Err(fail("record after outcome"));
        }
        match rec {
            LogRecord::Header(h) => {
                if header.is_some() || line_no != 1 {
                    return Err(fail("header must be the first and only header line"));
                }
                if h.v != SCHEMA_VERSION {
                    return Err(fail(&format!("unsupported schema version `{}`", h.v)));
                }
                header = Some(h);
            }
            _ if header.is_none() => return Err(fail("missing header")),
            LogRecord::Candidate(c) => {
                if candidates.insert(c.candidate_id, c).is_some() {
                    return Err(fail("duplicate candidate id"));
                }
            }
            LogRecord::Step(s) => steps.push(s),
            LogRecord::Outcome(o) => outcome = Some(o),
        }
    }
    let h = header.ok_or(Error::Parse {
        line: 0,
        message: "empty log".into(),
    })?;
    h.card.validate()?;
    let trajectory = RunTrajectory {
        run_id: h.run_id,
        agent_id: h.agent_id,
        task_id: h.task_id,
        round: h.round,
        budget_t: h.budget_t,
        seed: h.seed,
        card: h.card,
        baseline_id: h.baseline_id,
        baseline_val: h.baseline_val,
        steps,
        candidates,
    };
    trajectory.validate()?;
    Ok((trajectory, outcome))
}
