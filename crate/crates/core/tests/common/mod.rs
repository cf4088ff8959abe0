//! Hand-built trajectories and brute-force recomputations of every metric.
//!
//! The oracles here never call into the metric code under test; they work
//! from the raw step records with plain loops.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use searchlab::landscape::{Backend, Split, SyntheticBackend};
use searchlab::metrics::normalized_improvement;
use searchlab::strategies::{Decision, Directive, Observation, Strategy};
use searchlab::RunRng;
use searchlab::{
    Candidate, CandidateId, FailureKind, MetricDirection, RunOutcome, RunTrajectory, StepRecord,
    TaskCard,
};

pub const TAU: f64 = 0.015;

// ---------------------------------------------------------------- oracles

pub fn norm_imp(card: &TaskCard, p: f64) -> f64 {
    let worst = card.p_worst.unwrap_or(card.p_baseline);
    let range = (card.p_best - worst).abs();
    let gain = match card.direction {
        MetricDirection::Maximize => p - card.p_baseline,
        MetricDirection::Minimize => card.p_baseline - p,
    };
    if gain > 0.0 {
        gain / range
    } else {
        0.0
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

pub fn spread(pts: &[Vec<f64>]) -> Option<f64> {
    if pts.is_empty() {
        return None;
    }
    let d = pts[0].len();
    let mut c = vec![0.0; d];
    for p in pts {
        for i in 0..d {
            c[i] += p[i] / pts.len() as f64;
        }
    }
    Some(pts.iter().map(|p| dist(p, &c)).sum::<f64>() / pts.len() as f64)
}

pub fn reach(pts: &[Vec<f64>], base: &[f64]) -> Option<f64> {
    pts.iter().map(|p| dist(p, base)).reduce(f64::max)
}

pub fn cos_dist(a: &[f64], b: &[f64]) -> f64 {
    let zero = vec![0.0; a.len()];
    let (na, nb) = (dist(a, &zero), dist(b, &zero));
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let mut dot = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Agglomerative clustering that recomputes every average linkage from the
/// member pairs at each merge.
pub fn clusters_brute(pts: &[Vec<f64>], tau: f64) -> Vec<Vec<usize>> {
    let mut cl: Vec<Vec<usize>> = (0..pts.len()).map(|i| vec![i]).collect();
    loop {
        cl.sort_by_key(|c| c[0]);
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..cl.len() {
            for j in i + 1..cl.len() {
                let mut s = 0.0;
                for &a in &cl[i] {
                    for &b in &cl[j] {
                        s += cos_dist(&pts[a], &pts[b]);
                    }
                }
                let link = s / (cl[i].len() * cl[j].len()) as f64;
                if link <= tau && best.is_none_or(|(_, _, d)| link < d) {
                    best = Some((i, j, link));
                }
            }
        }
        match best {
            None => return cl,
            Some((i, j, _)) => {
                let moved = cl.remove(j);
                cl[i].extend(moved);
                cl[i].sort_unstable();
            }
        }
    }
}

pub fn uniqueness(pts: &[Vec<f64>]) -> Option<f64> {
    if pts.is_empty() {
        return None;
    }
    Some(clusters_brute(pts, TAU).len() as f64 / pts.len() as f64)
}

/// `tr(C)² / ‖C‖_F²`, which equals `(Σλ)² / Σλ²` without an eigensolver.
pub fn eff_dim(pts: &[Vec<f64>]) -> Option<f64> {
    let n = pts.len();
    if n < 2 || pts.iter().all(|p| p == &pts[0]) {
        return None;
    }
    let d = pts[0].len();
    let mut mean = vec![0.0; d];
    for p in pts {
        for i in 0..d {
            mean[i] += p[i] / n as f64;
        }
    }
    let mut c = vec![vec![0.0; d]; d];
    for p in pts {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (n - 1) as f64;
            }
        }
    }
    let tr: f64 = (0..d).map(|i| c[i][i]).sum();
    let fro: f64 = c.iter().flatten().map(|x| x * x).sum();
    Some(tr * tr / fro)
}

/// Oracle view of one run's metric row.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub spread: Option<f64>,
    pub reach: Option<f64>,
    pub uniqueness: Option<f64>,
    pub eff_dim: Option<f64>,
    pub valid_ratio: f64,
    pub gap_signed: f64,
    pub gap_abs: f64,
    pub auc: f64,
    pub first: Option<u32>,
    pub best: u32,
    pub late_gain: Option<f64>,
    pub tokens: u64,
    pub wall_clock: f64,
    pub opp_density: f64,
    pub normalized_val: f64,
    pub normalized_test: f64,
}

pub fn oracle_row(t: &RunTrajectory, o: &RunOutcome) -> OracleRow {
    let base = t.candidates[&t.baseline_id].genotype.clone();
    let mut pts = Vec::new();
    let mut series: Vec<Option<f64>> = Vec::new();
    let mut opp: Vec<(f64, f64)> = Vec::new();
    for s in &t.steps {
        if s.failure == FailureKind::None {
            let g = t.candidates[&s.candidate_id].genotype.clone();
            let imp = norm_imp(&t.card, s.val_metric.unwrap());
            opp.push((imp, dist(&g, &base)));
            pts.push(g);
            series.push(Some(imp));
        } else {
            series.push(None);
        }
    }
    let big_t = t.budget_t as usize;
    // envelope P_best^(t) for t = 1..T, computed as a prefix maximum per t
    let env = |k: usize| -> f64 { series.iter().take(k).filter_map(|v| *v).fold(0.0, f64::max) };
    let auc = (1..=big_t).map(env).sum::<f64>() / big_t as f64;
    let first = series
        .iter()
        .enumerate()
        .find(|(_, v)| matches!(v, Some(x) if *x > 0.0))
        .map(|(i, _)| i as u32 + 1);
    let run_max = env(big_t);
    let best = if run_max == 0.0 {
        1
    } else {
        series.iter().position(|v| *v == Some(run_max)).unwrap() as u32 + 1
    };
    let late_gain = if run_max > 0.0 {
        Some((run_max - env(big_t / 2)) / run_max)
    } else {
        None
    };
    let d_max = opp.iter().map(|x| x.1).fold(0.0, f64::max);
    let improving: Vec<&(f64, f64)> = opp.iter().filter(|x| x.0 > 0.0).collect();
    let opp_density = if improving.is_empty() || d_max == 0.0 {
        0.0
    } else {
        improving.iter().map(|x| x.0).sum::<f64>()
            / (improving.iter().map(|x| x.1).sum::<f64>() / d_max)
    };
    let nv = norm_imp(&t.card, o.p_val);
    let nt = norm_imp(&t.card, o.p_test);
    OracleRow {
        spread: spread(&pts),
        reach: reach(&pts, &base),
        uniqueness: uniqueness(&pts),
        eff_dim: eff_dim(&pts),
        valid_ratio: pts.len() as f64 / big_t as f64,
        gap_signed: nv - nt,
        gap_abs: (nv - nt).abs(),
        auc,
        first,
        best,
        late_gain,
        tokens: t.steps.iter().map(|s| s.tokens_consumed).sum(),
        wall_clock: t.steps.iter().map(|s| s.elapsed).sum::<f64>() + o.test_elapsed,
        opp_density,
        normalized_val: nv,
        normalized_test: nt,
    }
}

/// Strict-win enumeration over every ordered agent pair and task.
pub fn win_rates(
    raw: &BTreeMap<(String, String), f64>,
    cards: &BTreeMap<String, TaskCard>,
) -> BTreeMap<String, f64> {
    let agents: Vec<String> = raw
        .keys()
        .map(|k| k.0.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let tasks: Vec<String> = raw
        .keys()
        .map(|k| k.1.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = agents.len() as f64;
    let n = tasks.len() as f64;
    let mut out = BTreeMap::new();
    for a in &agents {
        let mut wins = 0u32;
        for b in agents.iter().filter(|b| *b != a) {
            for t in &tasks {
                let (va, vb) = (raw[&(a.clone(), t.clone())], raw[&(b.clone(), t.clone())]);
                let better = match cards[t].direction {
                    MetricDirection::Maximize => va > vb,
                    MetricDirection::Minimize => va < vb,
                };
                if better {
                    wins += 1;
                }
            }
        }
        out.insert(a.clone(), wins as f64 / ((k - 1.0) * n));
    }
    out
}

// ---------------------------------------------------------------- fixtures

const FAILS: [FailureKind; 4] = [
    FailureKind::ExecutionError,
    FailureKind::Timeout,
    FailureKind::InvalidMetric,
    FailureKind::ConstraintViolation,
];

pub fn card(dir: MetricDirection, best: f64, worst: Option<f64>, base: f64) -> TaskCard {
    TaskCard::new("fx", dir, best, worst, base).unwrap()
}

/// One trajectory from explicit `(genotype, val)` steps; `None` marks a failed
/// step. Candidates form a chain, costs follow a fixed schedule.
pub fn build(
    name: &str,
    card: TaskCard,
    base: Vec<f64>,
    budget: u32,
    steps: Vec<(Vec<f64>, Option<f64>)>,
    p_test: f64,
) -> (RunTrajectory, RunOutcome) {
    let mut candidates = BTreeMap::new();
    candidates.insert(
        CandidateId(0),
        Candidate {
            candidate_id: CandidateId(0),
            parent_id: None,
            genotype: base,
            created_step: 0,
        },
    );
    let mut records = Vec::new();
    let (mut best_id, mut best_val) = (CandidateId(0), card.p_baseline);
    for (i, (g, v)) in steps.into_iter().enumerate() {
        let k = i as u32 + 1;
        candidates.insert(
            CandidateId(k),
            Candidate {
                candidate_id: CandidateId(k),
                parent_id: Some(CandidateId(k - 1)),
                genotype: g,
                created_step: k,
            },
        );
        if let Some(v) = v {
            if card.direction.is_better(v, best_val) {
                best_id = CandidateId(k);
                best_val = v;
            }
        }
        records.push(StepRecord {
            step_index: k,
            candidate_id: CandidateId(k),
            val_metric: v,
            failure: if v.is_some() {
                FailureKind::None
            } else {
                FAILS[i % 4]
            },
            tokens_consumed: 50 + 7 * k as u64,
            elapsed: 1.25 * k as f64,
        });
    }
    let traj = RunTrajectory {
        run_id: format!("fx__{name}__r0"),
        agent_id: "fx".into(),
        task_id: name.into(),
        round: 0,
        budget_t: budget,
        seed: 0,
        baseline_id: CandidateId(0),
        baseline_val: card.p_baseline,
        card: card.clone(),
        steps: records,
        candidates,
    };
    let outcome = RunOutcome {
        best_validated_id: best_id,
        p_val: best_val,
        p_test,
        normalized_val: normalized_improvement(&card, best_val).unwrap(),
        normalized_test: normalized_improvement(&card, p_test).unwrap(),
        test_elapsed: 3.0,
    };
    (traj, outcome)
}

fn unit() -> TaskCard {
    card(MetricDirection::Maximize, 1.0, Some(0.0), 0.0)
}

/// The worked examples plus pseudo-random trajectories covering both
/// directions, unbounded-worst cards, failures and early stops.
pub fn fixtures() -> Vec<(RunTrajectory, RunOutcome)> {
    let mut out = vec![
        // centroid (1, 0), both points at distance 1
        build(
            "spread",
            unit(),
            vec![0.0, 0.0],
            2,
            vec![(vec![0.0, 0.0], Some(0.0)), (vec![2.0, 0.0], Some(0.1))],
            0.1,
        ),
        build(
            "reach",
            unit(),
            vec![0.0, 0.0],
            2,
            vec![(vec![1.0, 0.0], Some(0.1)), (vec![0.0, 3.0], Some(0.2))],
            0.2,
        ),
        build(
            "eff_dim",
            unit(),
            vec![0.0, 0.0],
            4,
            vec![
                (vec![2.0, 0.0], Some(0.1)),
                (vec![-2.0, 0.0], Some(0.1)),
                (vec![0.0, 1.0], Some(0.1)),
                (vec![0.0, -1.0], Some(0.1)),
            ],
            0.1,
        ),
        build(
            "auc",
            unit(),
            vec![0.0],
            4,
            vec![
                (vec![0.5], Some(0.0)),
                (vec![1.0], Some(0.2)),
                (vec![1.5], Some(0.1)),
                (vec![2.0], Some(0.4)),
            ],
            0.35,
        ),
        build(
            "opp",
            unit(),
            vec![0.0, 0.0],
            3,
            vec![
                (vec![1.0, 0.0], Some(0.1)),
                (vec![0.0, 2.0], Some(0.3)),
                (vec![4.0, 0.0], Some(0.0)),
            ],
            0.3,
        ),
        build(
            "all_failed",
            unit(),
            vec![0.0, 0.0],
            5,
            (0..5).map(|i| (vec![i as f64, 1.0], None)).collect(),
            0.0,
        ),
        build(
            "domainbed",
            card(MetricDirection::Maximize, 1.0, Some(0.0), 0.287),
            vec![0.0, 0.0],
            3,
            vec![
                (vec![0.3, 0.1], Some(0.4)),
                (vec![0.6, 0.2], Some(0.532)),
                (vec![0.2, 0.9], None),
            ],
            0.532,
        ),
        build(
            "unlearning",
            card(MetricDirection::Minimize, 0.0, None, 166.80),
            vec![1.0, 1.0, 1.0],
            4,
            vec![
                (vec![1.5, 1.0, 1.0], Some(170.0)),
                (vec![1.0, 2.0, 1.0], Some(40.0)),
                (vec![1.0, 2.0, 3.0], Some(4.84)),
                (vec![0.0, 0.0, 0.0], None),
            ],
            5.1,
        ),
        // early stop: 3 steps logged against a budget of 6
        build(
            "early_stop",
            unit(),
            vec![0.0, 0.0],
            6,
            vec![
                (vec![1.0, 1.0], Some(0.2)),
                (vec![1.0, 2.0], None),
                (vec![2.0, 2.0], Some(0.3)),
            ],
            0.25,
        ),
        build(
            "never_improves",
            card(MetricDirection::Maximize, 1.0, Some(0.0), 0.5),
            vec![0.0, 0.0],
            4,
            vec![
                (vec![1.0, 0.0], Some(0.4)),
                (vec![0.0, 1.0], Some(0.5)),
                (vec![1.0, 1.0], Some(0.3)),
                (vec![2.0, 0.0], Some(0.45)),
            ],
            0.48,
        ),
        build(
            "zero_and_duplicates",
            unit(),
            vec![0.0, 0.0],
            5,
            vec![
                (vec![0.0, 0.0], Some(0.1)),
                (vec![0.0, 0.0], Some(0.1)),
                (vec![1.0, 1.0], Some(0.2)),
                (vec![2.0, 2.0], Some(0.3)),
                (vec![1.0, 1.01], Some(0.25)),
            ],
            0.3,
        ),
        build(
            "collinear",
            unit(),
            vec![0.0, 0.0],
            4,
            vec![
                (vec![1.0, 2.0], Some(0.1)),
                (vec![2.0, 4.0], Some(0.2)),
                (vec![-1.0, -2.0], Some(0.05)),
                (vec![3.0, 6.0], Some(0.15)),
            ],
            0.2,
        ),
        build(
            "single_step",
            unit(),
            vec![0.0, 0.0, 0.0],
            1,
            vec![(vec![0.5, 0.5, 0.5], Some(0.3))],
            0.3,
        ),
        build(
            "late_gain_zero",
            unit(),
            vec![0.0],
            6,
            vec![
                (vec![1.0], Some(0.5)),
                (vec![2.0], Some(0.1)),
                (vec![3.0], Some(0.2)),
                (vec![4.0], Some(0.3)),
                (vec![5.0], Some(0.1)),
                (vec![6.0], Some(0.2)),
            ],
            0.45,
        ),
    ];
    for seed in 0..12u64 {
        out.push(random_fixture(seed));
    }
    out
}

pub fn random_fixture(seed: u64) -> (RunTrajectory, RunOutcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let dims = rng.gen_range(2..6);
    let budget: u32 = rng.gen_range(6..40);
    let logged = if seed % 4 == 3 { budget - 2 } else { budget };
    let card = match seed % 3 {
        0 => card(MetricDirection::Maximize, 1.0, Some(0.0), 0.4),
        1 => card(MetricDirection::Minimize, 0.0, Some(1.0), 0.6),
        _ => card(MetricDirection::Minimize, 0.0, None, 12.0),
    };
    let scale = if seed % 3 == 2 { 12.0 } else { 0.3 };
    let mut x = vec![0.0; dims];
    let steps = (0..logged)
        .map(|_| {
            for v in x.iter_mut() {
                *v += rng.gen_range(-0.6..0.6);
            }
            let val = if rng.gen::<f64>() < 0.2 {
                None
            } else {
                Some(card.p_baseline + scale * rng.gen_range(-0.5..0.5))
            };
            (x.clone(), val)
        })
        .collect();
    let p_test = card.p_baseline + scale * rng.gen_range(-0.3..0.4);
    build(
        &format!("random{seed}"),
        card,
        vec![0.0; dims],
        budget,
        steps,
        p_test,
    )
}

/// Steps a strategy against a synthetic backend, calling `check` after every observation.
pub fn drive<S: Strategy>(
    s: &mut S,
    backend: &SyntheticBackend,
    budget: u32,
    seed: u64,
    mut check: impl FnMut(&S, &Observation, Directive),
) {
    let mut rng = RunRng::seed_from_u64(seed);
    let mut genotypes: BTreeMap<CandidateId, Vec<f64>> = BTreeMap::new();
    genotypes.insert(CandidateId::BASELINE, backend.baseline_genotype());
    for step in 1..=budget {
        let Decision::Propose(req) = s.decide(step, &mut rng).unwrap() else {
            panic!("unexpected stop")
        };
        let child = backend
            .propose_child(&genotypes[&req.parent], req.directive, &mut rng)
            .unwrap();
        let eval = backend
            .evaluate(&child, Split::Validation, &mut rng)
            .unwrap();
        genotypes.insert(CandidateId(step), child.clone());
        let obs = Observation {
            step_index: step,
            candidate_id: CandidateId(step),
            parent_id: req.parent,
            directive: req.directive,
            genotype: child,
            val_metric: eval.value,
            failure: eval.failure,
        };
        s.observe(&obs).unwrap();
        check(s, &obs, req.directive);
    }
}
