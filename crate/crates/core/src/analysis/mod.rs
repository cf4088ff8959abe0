//! Statistics over sets of [`MetricsRow`]s: rank correlation, the density
//! partition, per-cell aggregates, convergence curves and fingerprints.
//!
//! Per-partition and per-agent correlations are the pooled correlation
//! applied to a filtered row subset; there is no separate code path.

mod tables;

pub use tables::{
    aggregate_csv, convergence_csv, correlation_csv, fingerprint_csv, parse_partition_csv,
    partition_csv, CorrelationRow,
};

use std::collections::{BTreeMap, BTreeSet};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::metrics::{best_so_far, normalized_val_series, MetricsRow, PROCESS_METRICS};
use crate::types::{Partition, RunTrajectory};

/// Column every correlation is taken against.
pub const FINAL_METRIC: &str = "normalized_test";

/// Metrics correlated against the final score, in table order.
pub fn correlated_metrics() -> Vec<&'static str> {
    let mut m: Vec<&str> = PROCESS_METRICS.to_vec();
    m.push("opp_density");
    m
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n_used: usize,
}

/// Spearman rank correlation over pairs where both values are defined.
pub fn spearman(xs: &[Option<f64>], ys: &[Option<f64>]) -> Result<Spearman> {
    if xs.len() != ys.len() {
        return Err(Error::UndefinedInput(format!(
            "spearman inputs differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let (a, b): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter_map(|(x, y)| Some((x.filter(|v| v.is_finite())?, y.filter(|v| v.is_finite())?)))
        .unzip();
    let n = a.len();
    let rho = if n >= 2 {
        pearson(&average_ranks(&a), &average_ranks(&b))
    } else {
        None
    };
    let p_value = match rho {
        Some(r) if n >= 3 => Some(t_test_p(r, n)),
        _ => None,
    };
    Ok(Spearman {
        rho,
        p_value,
        n_used: n,
    })
}

/// Two-sided p-value of `t = r·sqrt((n−2)/(1−r²))` on n−2 degrees of freedom.
pub fn t_test_p(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Significance stars at 0.05 / 0.01 / 0.001.
pub fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.001 => "***",
        Some(p) if p < 0.01 => "**",
        Some(p) if p < 0.05 => "*",
        _ => "",
    }
}

/// Median split: above the median → dense; at or below → sparse.
pub fn partition_by_density(phi: &BTreeMap<String, f64>) -> Result<BTreeMap<String, Partition>> {
    if phi.is_empty() {
        return Err(Error::UndefinedInput("no tasks to partition".into()));
    }
    let m = median(phi.values().copied().collect());
    Ok(phi
        .iter()
        .map(|(t, v)| {
            let p = if *v > m {
                Partition::Dense
            } else {
                Partition::Sparse
            };
            (t.clone(), p)
        })
        .collect())
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-task φ_opp averaged over every run of that task.
pub fn task_phi(rows: &[MetricsRow]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.task_id.clone()).or_default();
        e.0 += r.opp_density;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(t, (s, n))| (t, s / n as f64))
        .collect()
}

/// Pooled correlation of every metric against the final score.
pub fn correlate(rows: &[MetricsRow], subset: &str) -> Result<Vec<CorrelationRow>> {
    let finals: Vec<Option<f64>> = rows.iter().map(|r| r.value(FINAL_METRIC)).collect();
    correlated_metrics()
        .into_iter()
        .map(|m| {
            let xs: Vec<Option<f64>> = rows.iter().map(|r| r.value(m)).collect();
            let s = spearman(&xs, &finals)?;
            let values: Vec<f64> = xs.iter().flatten().copied().collect();
            let mean =
                (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
            Ok(CorrelationRow {
                subset: subset.to_string(),
                metric: m.to_string(),
                mean,
                rho: s.rho,
                p_value: s.p_value,
                n_used: s.n_used,
            })
        })
        .collect()
}

/// Correlations within each density partition.
pub fn correlate_by_partition(
    rows: &[MetricsRow],
    partition: &BTreeMap<String, Partition>,
) -> Result<Vec<CorrelationRow>> {
    let mut out = Vec::new();
    for p in [Partition::Dense, Partition::Sparse] {
        let subset: Vec<MetricsRow> = rows
            .iter()
            .filter(|r| partition.get(&r.task_id) == Some(&p))
            .cloned()
            .collect();
        out.extend(correlate(&subset, p.as_str())?);
    }
    Ok(out)
}

/// Correlations within each agent's runs.
pub fn correlate_by_agent(rows: &[MetricsRow]) -> Result<Vec<CorrelationRow>> {
    let agents: BTreeSet<&str> = rows.iter().map(|r| r.agent_id.as_str()).collect();
    let mut out = Vec::new();
    for a in agents {
        let subset: Vec<MetricsRow> = rows.iter().filter(|r| r.agent_id == a).cloned().collect();
        out.extend(correlate(&subset, a)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    Mean,
    Best,
    Std,
}

impl AggregateMode {
    pub const ALL: [AggregateMode; 3] =
        [AggregateMode::Mean, AggregateMode::Best, AggregateMode::Std];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregateMode::Mean => "mean",
            AggregateMode::Best => "best",
            AggregateMode::Std => "std",
        }
    }

    fn apply(self, v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        match self {
            AggregateMode::Mean => mean,
            AggregateMode::Best => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            AggregateMode::Std => {
                (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
            }
        }
    }
}

/// Agent × task table of one column aggregated over rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub column: String,
    pub mode: AggregateMode,
    pub agents: Vec<String>,
    pub tasks: Vec<String>,
    pub cells: BTreeMap<(String, String), f64>,
    /// Mean over tasks of each agent's cells.
    pub agent_means: BTreeMap<String, f64>,
}

pub fn aggregate(rows: &[MetricsRow], column: &str, mode: AggregateMode) -> AggregateTable {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.value(column) {
            groups
                .entry((r.agent_id.clone(), r.task_id.clone()))
                .or_default()
                .push(v);
        }
    }
    let cells: BTreeMap<(String, String), f64> = groups
        .into_iter()
        .map(|(k, v)| (k, mode.apply(&v)))
        .collect();
    let agents: Vec<String> = cells
        .keys()
        .map(|(a, _)| a.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tasks: Vec<String> = cells
        .keys()
        .map(|(_, t)| t.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let agent_means = agents
        .iter()
        .map(|a| {
            let v: Vec<f64> = cells
                .iter()
                .filter(|((ca, _), _)| ca == a)
                .map(|(_, v)| *v)
                .collect();
            (a.clone(), v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    AggregateTable {
        column: column.to_string(),
        mode,
        agents,
        tasks,
        cells,
        agent_means,
    }
}

/// Mean rank of each agent across `tasks` (1 = best), ranking agents per
/// task by their mean final score over rounds. Ties share the average rank.
pub fn mean_ranks(rows: &[MetricsRow], tasks: &BTreeSet<String>) -> BTreeMap<String, f64> {
    let table = aggregate(rows, FINAL_METRIC, AggregateMode::Mean);
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for t in table.tasks.iter().filter(|t| tasks.contains(*t)) {
        let entries: Vec<(&String, f64)> = table
            .agents
            .iter()
            .filter_map(|a| table.cells.get(&(a.clone(), t.clone())).map(|v| (a, *v)))
            .collect();
        // negate so the highest score gets rank 1
        let neg: Vec<f64> = entries.iter().map(|(_, v)| -v).collect();
        for ((a, _), r) in entries.iter().zip(average_ranks(&neg)) {
            let e = sums.entry((*a).clone()).or_default();
            e.0 += r;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(a, (s, n))| (a, s / n as f64))
        .collect()
}

/// Per-agent mean best-so-far normalized validation envelope at each step.
pub fn convergence_curves(trajectories: &[RunTrajectory]) -> Result<BTreeMap<String, Vec<f64>>> {
    let Some(first) = trajectories.first() else {
        return Ok(BTreeMap::new());
    };
    let t = first.budget_t as usize;
    let mut acc: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for traj in trajectories {
        if traj.budget_t as usize != t {
            return Err(Error::UndefinedInput(format!(
                "mixed budgets: {} has T={}, expected {t}",
                traj.run_id, traj.budget_t
            )));
        }
        let mut env = best_so_far(&normalized_val_series(traj)?);
        let last = env.last().copied().unwrap_or(0.0);
        env.resize(t, last);
        let e = acc
            .entry(traj.agent_id.clone())
            .or_insert_with(|| (vec![0.0; t], 0));
        e.0.iter_mut().zip(&env).for_each(|(a, b)| *a += b);
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(a, (sum, n))| (a, sum.into_iter().map(|s| s / n as f64).collect()))
        .collect())
}

/// Fingerprint axes: (name, metric column, higher raw value is better).
pub const FINGERPRINT_AXES: [(&str, &str, bool); 6] = [
    ("convergence", "auc_over_steps", true),
    ("early_improvement", "first_improvement_step", false),
    ("reach", "exploration_reach", true),
    ("focus", "effective_dim", false),
    ("reliability", "valid_step_ratio", true),
    ("frugality", "token_cost", false),
];

/// Six axis scores per agent in [0, 1], min–max normalized across agents so
/// that higher is better everywhere. A degenerate axis scores 0.5; an agent
/// with no defined value on an axis scores 0 there.
pub fn fingerprint(rows: &[MetricsRow]) -> BTreeMap<String, [f64; 6]> {
    let agents: BTreeSet<&str> = rows.iter().map(|r| r.agent_id.as_str()).collect();
    let mut means: BTreeMap<&str, [Option<f64>; 6]> = BTreeMap::new();
    for a in &agents {
        let mut m = [None; 6];
        for (k, (_, col, _)) in FINGERPRINT_AXES.iter().enumerate() {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.agent_id == *a)
                .filter_map(|r| r.value(col))
                .collect();
            if !v.is_empty() {
                m[k] = Some(v.iter().sum::<f64>() / v.len() as f64);
            }
        }
        means.insert(a, m);
    }
    let mut out: BTreeMap<String, [f64; 6]> =
        agents.iter().map(|a| (a.to_string(), [0.0; 6])).collect();
    for (k, (_, _, higher)) in FINGERPRINT_AXES.iter().enumerate() {
        let vals: Vec<f64> = means.values().filter_map(|m| m[k]).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, m) in &means {
            let score = match m[k] {
                None if vals.is_empty() => 0.5,
                None => 0.0,
                Some(_) if !(hi > lo) => 0.5,
                Some(v) if *higher => (v - lo) / (hi - lo),
                Some(v) => (hi - v) / (hi - lo),
            };
            out.get_mut(*a).expect("agent present")[k] = score;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|x| Some(*x)).collect()
    }

    #[test]
    fn spearman_examples() {
        let x = some(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(spearman(&x, &x).unwrap().rho, Some(1.0));
        let rev = some(&[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(spearman(&x, &rev).unwrap().rho, Some(-1.0));
        let ties = some(&[1.0, 1.0, 2.0, 2.0]);
        let r = spearman(&x, &ties).unwrap().rho.unwrap();
        assert!((r - 4.0 / 20f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spearman_drops_undefined_pairs() {
        let x = vec![Some(1.0), None, Some(3.0), Some(2.0)];
        let y = vec![Some(1.0), Some(5.0), None, Some(2.0)];
        let s = spearman(&x, &y).unwrap();
        assert_eq!(s.n_used, 2);
        assert_eq!(s.p_value, None);
        let flat = some(&[1.0, 1.0, 1.0]);
        assert_eq!(spearman(&flat, &some(&[1.0, 2.0, 3.0])).unwrap().rho, None);
    }

    #[test]
    fn p_value_reference() {
        // r = 0.5, n = 10: t = 1.633, df 8, two-sided p = 0.1411
        assert!((t_test_p(0.5, 10) - 0.1411).abs() < 1e-4);
        assert_eq!(t_test_p(1.0, 5), 0.0);
    }

    #[test]
    fn median_ties_go_sparse() {
        let phi: BTreeMap<String, f64> = [("a", 0.1), ("b", 0.2), ("c", 0.3)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let p = partition_by_density(&phi).unwrap();
        assert_eq!(p["a"], Partition::Sparse);
        assert_eq!(p["b"], Partition::Sparse);
        assert_eq!(p["c"], Partition::Dense);
        assert!(partition_by_density(&BTreeMap::new()).is_err());
    }

    #[test]
    fn aggregate_modes() {
        let v = [0.1, 0.2, 0.3];
        assert!((AggregateMode::Mean.apply(&v) - 0.2).abs() < 1e-15);
        assert_eq!(AggregateMode::Best.apply(&v), 0.3);
        assert_eq!(AggregateMode::Std.apply(&[0.4]), 0.0);
    }
}
