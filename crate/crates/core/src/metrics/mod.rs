//! Final and process-level metrics of a single run.
//!
//! Every function here is a pure function of its inputs. Metrics that have no
//! value for a given run return `None`; the table layer serializes that as an
//! empty field.

mod cluster;
mod row;

pub use cluster::{average_linkage_clusters, cosine_distance, UNIQUENESS_TAU};
pub use row::{
    compute_row, parse_metrics_csv, write_metrics_csv, MetricsRow, METRICS_HEADER, PROCESS_METRICS,
};

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::landscape::l2_norm;
use crate::types::{MetricDirection, RunOutcome, RunTrajectory, TaskCard};

/// Agent-over-baseline gain as a fraction of the task's metric range, clamped at 0.
pub fn normalized_improvement(card: &TaskCard, p_agent: f64) -> Result<f64> {
    let range = (card.p_best - card.effective_worst()).abs();
    if !(range > 0.0) {
        return Err(Error::Config(format!(
            "task `{}`: p_best equals the worst bound",
            card.task_id
        )));
    }
    let gain = match card.direction {
        MetricDirection::Maximize => p_agent - card.p_baseline,
        MetricDirection::Minimize => card.p_baseline - p_agent,
    };
    Ok((gain / range).max(0.0))
}

/// Fraction of (opponent, task) pairs each agent strictly wins on raw test metrics.
pub fn pairwise_win_rate(
    raw_test: &BTreeMap<(String, String), f64>,
    cards: &BTreeMap<String, TaskCard>,
) -> Result<BTreeMap<String, f64>> {
    let agents: BTreeSet<&String> = raw_test.keys().map(|(a, _)| a).collect();
    let tasks: BTreeSet<&String> = raw_test.keys().map(|(_, t)| t).collect();
    if agents.len() < 2 {
        return Err(Error::UndefinedInput(
            "win rate needs at least two agents".into(),
        ));
    }
    let cell = |a: &String, t: &String| {
        raw_test
            .get(&(a.clone(), t.clone()))
            .copied()
            .ok_or_else(|| Error::UndefinedInput(format!("missing test metric for ({a}, {t})")))
    };
    let k = agents.len() as f64;
    let n = tasks.len() as f64;
    let mut out = BTreeMap::new();
    for a in &agents {
        let mut wins = 0usize;
        for t in &tasks {
            let card = cards
                .get(*t)
                .ok_or_else(|| Error::UndefinedInput(format!("no task card for `{t}`")))?;
            let va = cell(a, t)?;
            for b in &agents {
                if a != b && card.direction.is_better(va, cell(b, t)?) {
                    wins += 1;
                }
            }
        }
        out.insert((*a).clone(), wins as f64 / ((k - 1.0) * n));
    }
    Ok(out)
}

fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut c = vec![0.0; d];
    for p in points {
        c.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    let n = points.len() as f64;
    c.iter_mut().for_each(|a| *a /= n);
    c
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean distance of the embeddings from their centroid.
pub fn exploration_spread(embeddings: &[Vec<f64>]) -> Option<f64> {
    if embeddings.is_empty() {
        return None;
    }
    let c = centroid(embeddings);
    Some(embeddings.iter().map(|e| dist(e, &c)).sum::<f64>() / embeddings.len() as f64)
}

/// Largest distance of any embedding from the baseline.
pub fn exploration_reach(embeddings: &[Vec<f64>], baseline: &[f64]) -> Option<f64> {
    embeddings
        .iter()
        .map(|e| dist(e, baseline))
        .reduce(f64::max)
}

/// Cluster count over n under cosine average-linkage clustering at [`UNIQUENESS_TAU`].
pub fn exploration_uniqueness(embeddings: &[Vec<f64>]) -> Option<f64> {
    if embeddings.is_empty() {
        return None;
    }
    let k = average_linkage_clusters(embeddings, UNIQUENESS_TAU).len();
    Some(k as f64 / embeddings.len() as f64)
}

/// Participation ratio `(Σλ)² / Σλ²` of the sample covariance eigenvalues.
pub fn effective_dim(embeddings: &[Vec<f64>]) -> Option<f64> {
    let n = embeddings.len();
    if n < 2 || embeddings.iter().all(|e| e == &embeddings[0]) {
        return None;
    }
    let d = embeddings[0].len();
    let c = centroid(embeddings);
    let centered = DMatrix::from_fn(n, d, |i, j| embeddings[i][j] - c[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let sum: f64 = eig.iter().sum();
    let sq: f64 = eig.iter().map(|l| l * l).sum();
    if !(sq > 0.0) {
        return None;
    }
    Some(sum * sum / sq)
}

/// Best-so-far envelope of a per-step series; `None` entries carry the
/// previous best forward and the envelope starts at 0.
pub fn best_so_far(series: &[Option<f64>]) -> Vec<f64> {
    let mut best = 0.0f64;
    series
        .iter()
        .map(|v| {
            if let Some(v) = v {
                best = best.max(*v);
            }
            best
        })
        .collect()
}

/// Time-averaged best-so-far envelope over a budget of `t` steps.
/// Steps beyond the series (early stop) hold the last envelope value.
pub fn auc_over_steps(series: &[Option<f64>], t: u32) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let env = padded_envelope(series, t);
    env.iter().sum::<f64>() / t as f64
}

fn padded_envelope(series: &[Option<f64>], t: u32) -> Vec<f64> {
    let mut env = best_so_far(&series[..series.len().min(t as usize)]);
    let last = env.last().copied().unwrap_or(0.0);
    env.resize(t as usize, last);
    env
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementSteps {
    pub first: Option<u32>,
    pub best: u32,
    pub late_gain: Option<f64>,
}

/// First step above the baseline, first step attaining the run maximum, and
/// the share of the final envelope earned in the second half of the budget.
pub fn improvement_steps(series: &[Option<f64>], t: u32) -> ImprovementSteps {
    let env = padded_envelope(series, t);
    let first = series
        .iter()
        .position(|v| v.is_some_and(|x| x > 0.0))
        .map(|i| i as u32 + 1);
    let final_best = env.last().copied().unwrap_or(0.0);
    let best = env
        .iter()
        .position(|v| *v >= final_best)
        .map_or(0, |i| i as u32 + 1);
    let late_gain = if final_best > 0.0 {
        let half = match (t / 2) as usize {
            0 => 0.0,
            h => env[h - 1],
        };
        Some((final_best - half) / final_best)
    } else {
        None
    };
    ImprovementSteps {
        first,
        best,
        late_gain,
    }
}

/// Failure-free steps over the configured budget.
pub fn valid_step_ratio(trajectory: &RunTrajectory) -> f64 {
    if trajectory.budget_t == 0 {
        return 0.0;
    }
    trajectory.valid_steps().count() as f64 / trajectory.budget_t as f64
}

/// Signed and absolute difference between validation and test improvement.
pub fn val_test_gap(outcome: &RunOutcome) -> (f64, f64) {
    let signed = outcome.normalized_val - outcome.normalized_test;
    (signed, signed.abs())
}

/// Improvement gained per unit of reach-normalized distance on improving steps.
/// `steps` holds `(imp_k, d_k)` per valid step.
pub fn opportunity_density(steps: &[(f64, f64)]) -> f64 {
    let d_max = steps.iter().map(|s| s.1).fold(0.0, f64::max);
    let improving: Vec<&(f64, f64)> = steps.iter().filter(|s| s.0 > 0.0).collect();
    if improving.is_empty() || !(d_max > 0.0) {
        return 0.0;
    }
    let gain: f64 = improving.iter().map(|s| s.0).sum();
    let travel: f64 = improving.iter().map(|s| s.1).sum::<f64>() / d_max;
    if !(travel > 0.0) {
        return 0.0;
    }
    gain / travel
}

/// Per-step normalized validation improvement; `None` on failed steps.
pub fn normalized_val_series(trajectory: &RunTrajectory) -> Result<Vec<Option<f64>>> {
    trajectory
        .steps
        .iter()
        .map(|s| match (s.is_valid(), s.val_metric) {
            (true, Some(v)) => normalized_improvement(&trajectory.card, v).map(Some),
            _ => Ok(None),
        })
        .collect()
}

/// `(imp_k, ||e_k − e_base||)` for every valid step.
pub fn opportunity_steps(trajectory: &RunTrajectory) -> Result<Vec<(f64, f64)>> {
    let base = trajectory.baseline().genotype.clone();
    trajectory
        .valid_steps()
        .map(|s| {
            let imp = normalized_improvement(
                &trajectory.card,
                s.val_metric.unwrap_or(trajectory.baseline_val),
            )?;
            let g = &trajectory.candidates[&s.candidate_id].genotype;
            let diff: Vec<f64> = g.iter().zip(&base).map(|(a, b)| a - b).collect();
            Ok((imp, l2_norm(&diff)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn card(dir: MetricDirection, best: f64, worst: Option<f64>, base: f64) -> TaskCard {
        TaskCard::new("t", dir, best, worst, base).unwrap()
    }

    #[test]
    fn normalized_improvement_examples() {
        let c = card(MetricDirection::Maximize, 1.0, Some(0.0), 0.287);
        assert!((normalized_improvement(&c, 0.532).unwrap() - 0.245).abs() < 5e-4);
        let u = card(MetricDirection::Minimize, 0.0, None, 166.80);
        assert!((normalized_improvement(&u, 4.84).unwrap() - 0.971).abs() < 5e-4);
        assert_eq!(normalized_improvement(&c, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn spread_reach_examples() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(exploration_spread(&pts), Some(1.0));
        let pts = vec![vec![1.0, 0.0], vec![0.0, 3.0]];
        assert_eq!(exploration_reach(&pts, &[0.0, 0.0]), Some(3.0));
        assert_eq!(exploration_spread(&[]), None);
        assert_eq!(exploration_reach(&[], &[0.0]), None);
    }

    #[test]
    fn effective_dim_examples() {
        let pts = vec![
            vec![2.0, 0.0],
            vec![-2.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        assert!((effective_dim(&pts).unwrap() - 100.0 / 68.0).abs() < 1e-12);
        let line = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 6.0]];
        assert!((effective_dim(&line).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(effective_dim(&[vec![1.0, 1.0]]), None);
        assert_eq!(effective_dim(&[vec![0.1, 0.2], vec![0.1, 0.2]]), None);
    }

    #[test]
    fn envelope_metrics_examples() {
        let s = [Some(0.0), Some(0.2), Some(0.1), Some(0.4)];
        assert!((auc_over_steps(&s, 4) - 0.2).abs() < 1e-15);
        let r = improvement_steps(&s, 4);
        assert_eq!((r.first, r.best), (Some(2), 4));
        assert!((r.late_gain.unwrap() - 0.5).abs() < 1e-15);
        let none = [Some(0.0), None, Some(0.0), Some(0.0)];
        let r = improvement_steps(&none, 4);
        assert_eq!((r.first, r.late_gain), (None, None));
        assert_eq!(auc_over_steps(&[None, None], 2), 0.0);
    }

    #[test]
    fn opportunity_density_examples() {
        assert!((opportunity_density(&[(0.3, 2.0), (0.0, 1.0)]) - 0.3).abs() < 1e-15);
        let v = opportunity_density(&[(0.1, 1.0), (0.3, 2.0), (0.0, 4.0)]);
        assert!((v - 0.4 / 0.75).abs() < 1e-12);
        assert_eq!(opportunity_density(&[(0.0, 1.0)]), 0.0);
    }

    #[test]
    fn win_rate_examples() {
        let mut cards = BTreeMap::new();
        let mut raw = BTreeMap::new();
        for (i, t) in ["t1", "t2", "t3"].iter().enumerate() {
            cards.insert(
                t.to_string(),
                card(MetricDirection::Maximize, 1.0, Some(0.0), 0.1),
            );
            raw.insert(("A".into(), t.to_string()), [0.5, 0.6, 0.4][i]);
            raw.insert(("B".into(), t.to_string()), [0.4, 0.5, 0.4][i]);
        }
        let wr = pairwise_win_rate(&raw, &cards).unwrap();
        assert!((wr["A"] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(wr["B"], 0.0);
        raw.remove(&("B".to_string(), "t1".to_string()));
        assert!(pairwise_win_rate(&raw, &cards).is_err());
    }
}
