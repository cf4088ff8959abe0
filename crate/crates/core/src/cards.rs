//! Task-card tables: comma-separated, one card per line, fixed header.
//!
//! An empty `p_worst` marks an unbounded-worst task. `phi_opp` and
//! `partition` may be empty.

use crate::error::{Error, Result};
use crate::types::{MetricDirection, Partition, TaskCard};

pub const CARDS_HEADER: &str = "task_id,direction,p_best,p_worst,p_baseline,phi_opp,partition";

/// The eighteen reference task cards (normalization constants, opportunity
/// density and partition label per task).
pub const REFERENCE_CARDS_CSV: &str = include_str!("../fixtures/reference_task_cards.csv");

pub fn reference_cards() -> Vec<TaskCard> {
    parse_cards(REFERENCE_CARDS_CSV).expect("bundled task cards parse")
}

pub fn parse_cards(text: &str) -> Result<Vec<TaskCard>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == CARDS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CARDS_HEADER}`"),
            })
        }
    }
    let mut cards: Vec<TaskCard> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, got {}", fields.len())));
        }
        let num = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad {name} `{s}`")))
        };
        let opt = |s: &str, name: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, name).map(Some)
            }
        };
        if fields[0].is_empty() {
            return Err(err("empty task_id".into()));
        }
        if cards.iter().any(|c| c.task_id == fields[0]) {
            return Err(err(format!("duplicate task `{}`", fields[0])));
        }
        let direction: MetricDirection =
            fields[1].parse().map_err(|e: Error| err(e.to_string()))?;
        let partition = match fields[6] {
            "" => None,
            "dense" => Some(Partition::Dense),
            "sparse" => Some(Partition::Sparse),
            other => return Err(err(format!("bad partition `{other}`"))),
        };
        let card = TaskCard {
            task_id: fields[0].to_string(),
            direction,
            p_best: num(fields[2], "p_best")?,
            p_worst: opt(fields[3], "p_worst")?,
            p_baseline: num(fields[4], "p_baseline")?,
            phi_opp: opt(fields[5], "phi_opp")?,
            partition,
        };
        card.validate().map_err(|e| err(e.to_string()))?;
        cards.push(card);
    }
    Ok(cards)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cards_load() {
        let cards = reference_cards();
        assert_eq!(cards.len(), 18);
        let unbounded: Vec<_> = cards
            .iter()
            .filter(|c| c.p_worst.is_none())
            .map(|c| c.task_id.as_str())
            .collect();
        assert_eq!(unbounded, ["CausalML", "gCastle", "Unlearning"]);
        let dense = cards
            .iter()
            .filter(|c| c.partition == Some(Partition::Dense))
            .count();
        assert_eq!(dense, 9);
        let gcastle = cards.iter().find(|c| c.task_id == "gCastle").unwrap();
        assert_eq!(gcastle.p_baseline, 71.0);
        assert_eq!(gcastle.direction, MetricDirection::Minimize);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_cards("").is_err());
        assert!(parse_cards("a,b,c\n").is_err());
        let bad_dir = format!("{CARDS_HEADER}\nx,upward,1,0,0.5,,\n");
        assert!(parse_cards(&bad_dir).is_err());
        let inverted = format!("{CARDS_HEADER}\nx,maximize,0,1,0.5,,\n");
        assert!(parse_cards(&inverted).is_err());
        let dup = format!("{CARDS_HEADER}\nx,maximize,1,0,0.5,,\nx,maximize,1,0,0.5,,\n");
        assert!(parse_cards(&dup).is_err());
        let nan = format!("{CARDS_HEADER}\nx,maximize,NaN,0,0.5,,\n");
        assert!(parse_cards(&nan).is_err());
    }
}
