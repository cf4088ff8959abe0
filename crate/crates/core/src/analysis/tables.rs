//! Comma-separated renderings of analysis results. Undefined values are empty fields.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{stars, AggregateTable, FINGERPRINT_AXES};
use crate::error::{Error, Result};
use crate::types::Partition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub subset: String,
    pub metric: String,
    pub mean: Option<f64>,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n_used: usize,
}

fn render(header: &[String], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for r in rows {
        w.write_record(&r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    render(
        &strings(&[
            "subset", "metric", "mean", "rho", "p_value", "stars", "n_used",
        ]),
        rows.iter()
            .map(|r| {
                vec![
                    r.subset.clone(),
                    r.metric.clone(),
                    opt(r.mean),
                    opt(r.rho),
                    opt(r.p_value),
                    stars(r.p_value).to_string(),
                    r.n_used.to_string(),
                ]
            })
            .collect(),
    )
}

/// Agent rows, task columns, then the agent's mean over tasks.
pub fn aggregate_csv(table: &AggregateTable) -> String {
    let mut header = vec!["agent".to_string()];
    header.extend(table.tasks.iter().cloned());
    header.push("mean".into());
    let rows = table
        .agents
        .iter()
        .map(|a| {
            let mut r = vec![a.clone()];
            for t in &table.tasks {
                r.push(opt(table.cells.get(&(a.clone(), t.clone())).copied()));
            }
            r.push(num(table.agent_means[a]));
            r
        })
        .collect();
    render(&header, rows)
}

pub fn partition_csv(
    phi: &BTreeMap<String, f64>,
    partition: &BTreeMap<String, Partition>,
) -> String {
    render(
        &strings(&["task_id", "phi_opp", "partition"]),
        phi.iter()
            .map(|(t, v)| {
                vec![
                    t.clone(),
                    num(*v),
                    partition
                        .get(t)
                        .map(|p| p.as_str().to_string())
                        .unwrap_or_default(),
                ]
            })
            .collect(),
    )
}

pub fn parse_partition_csv(text: &str) -> Result<BTreeMap<String, (f64, Partition)>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header != vec!["task_id", "phi_opp", "partition"] {
        return Err(Error::Parse {
            line: 1,
            message: "expected header task_id,phi_opp,partition".into(),
        });
    }
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |m: String| Error::Parse { line, message: m };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let phi: f64 = rec[1]
            .parse()
            .map_err(|_| bad(format!("bad phi `{}`", &rec[1])))?;
        let p = match &rec[2] {
            "dense" => Partition::Dense,
            "sparse" => Partition::Sparse,
            other => return Err(bad(format!("bad partition `{other}`"))),
        };
        out.insert(rec[0].to_string(), (phi, p));
    }
    Ok(out)
}

/// `step` column then one column per agent.
pub fn convergence_csv(curves: &BTreeMap<String, Vec<f64>>) -> String {
    let mut header = vec!["step".to_string()];
    header.extend(curves.keys().cloned());
    let t = curves.values().map(Vec::len).max().unwrap_or(0);
    let rows = (0..t)
        .map(|i| {
            let mut r = vec![(i + 1).to_string()];
            r.extend(curves.values().map(|c| opt(c.get(i).copied())));
            r
        })
        .collect();
    render(&header, rows)
}

pub fn fingerprint_csv(fp: &BTreeMap<String, [f64; 6]>) -> String {
    let mut header = vec!["agent".to_string()];
    header.extend(FINGERPRINT_AXES.iter().map(|(n, _, _)| n.to_string()));
    let rows = fp
        .iter()
        .map(|(a, s)| {
            let mut r = vec![a.clone()];
            r.extend(s.iter().map(|v| num(*v)));
            r
        })
        .collect();
    render(&header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_round_trip() {
        let phi: BTreeMap<String, f64> = [("a".to_string(), 0.5), ("b".to_string(), 0.01)].into();
        let part: BTreeMap<String, Partition> = [
            ("a".to_string(), Partition::Dense),
            ("b".to_string(), Partition::Sparse),
        ]
        .into();
        let text = partition_csv(&phi, &part);
        let back = parse_partition_csv(&text).unwrap();
        assert_eq!(back["a"], (0.5, Partition::Dense));
        assert_eq!(back["b"], (0.01, Partition::Sparse));
        assert!(parse_partition_csv("x,y\n").is_err());
    }

    #[test]
    fn convergence_layout() {
        let curves: BTreeMap<String, Vec<f64>> = [("g".to_string(), vec![0.2, 0.2])].into();
        assert_eq!(convergence_csv(&curves), "step,g\n1,0.2\n2,0.2\n");
    }
}
