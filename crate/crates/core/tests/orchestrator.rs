use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use searchlab::landscape::{generate_landscape, Backend, EvalResult, Split, SyntheticBackend};
use searchlab::log::parse_log;
use searchlab::orchestrator::{
    execute_grid, parse_manifest, run_grid, AgentEntry, GenerateEntry, GridConfig, ResolvedTask,
    RunStatus, TaskEntry,
};
use searchlab::strategies::{Directive, StrategyConfig};
use searchlab::types::{select_best_validated, validation_value};
use searchlab::{RunRng, TaskCard};

type Calls = Arc<Mutex<Vec<(Split, Vec<f64>, Option<f64>)>>>;

/// Delegates to a synthetic landscape and records every evaluation.
struct Spy {
    inner: SyntheticBackend,
    calls: Calls,
}

impl Backend for Spy {
    fn card(&self) -> &TaskCard {
        self.inner.card()
    }
    fn dims(&self) -> usize {
        self.inner.dims()
    }
    fn baseline_genotype(&self) -> Vec<f64> {
        self.inner.baseline_genotype()
    }
    fn baseline_val(&self) -> f64 {
        self.inner.baseline_val()
    }
    fn evaluate(&self, x: &[f64], split: Split, rng: &mut RunRng) -> searchlab::Result<EvalResult> {
        let r = self.inner.evaluate(x, split, rng)?;
        self.calls
            .lock()
            .unwrap()
            .push((split, x.to_vec(), r.value));
        Ok(r)
    }
    fn propose_child(
        &self,
        parent: &[f64],
        directive: Directive,
        rng: &mut RunRng,
    ) -> searchlab::Result<Vec<f64>> {
        self.inner.propose_child(parent, directive, rng)
    }
}

fn agent(name: &str) -> AgentEntry {
    AgentEntry {
        id: name.to_string(),
        strategy: StrategyConfig::default_for(name).unwrap(),
    }
}

fn generated(id: &str, seed: u64, density: f64) -> TaskEntry {
    TaskEntry {
        id: id.to_string(),
        spec: None,
        generate: Some(GenerateEntry {
            seed,
            density,
            dims: 4,
            direction: None,
            noise_val_sigma: None,
            noise_test_sigma: None,
            test_bias: None,
            p_fail: None,
            p_timeout: None,
        }),
        external: None,
        reach_scale: None,
    }
}

#[test]
fn test_split_is_touched_once_on_the_selected_candidate() {
    for name in StrategyConfig::NAMES {
        let calls = Calls::default();
        let mut spec = generate_landscape(5, 0.5, 4).unwrap();
        spec.p_fail = 0.2;
        spec.test_bias = 0.05;
        let task = ResolvedTask {
            id: "spy".into(),
            backend: Box::new(Spy {
                inner: SyntheticBackend::new("spy", spec).unwrap(),
                calls: calls.clone(),
            }),
            reach_scale: 5.0,
        };
        let config = GridConfig {
            master_seed: 3,
            budget: 40,
            rounds: 1,
            workers: 1,
            agents: vec![agent(name)],
            tasks: vec![],
        };
        let mut runs = execute_grid(&config, &[task]).unwrap();
        let (t, o) = runs.remove(0).result.unwrap();
        let calls = calls.lock().unwrap();
        let tests: Vec<usize> = calls
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0 == Split::Test)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(
            tests,
            vec![calls.len() - 1],
            "{name}: test split must be the single final call"
        );
        let evaluated = t
            .steps
            .iter()
            .filter(|s| s.candidate_id != t.baseline_id)
            .count();
        assert_eq!(calls.len() - 1, evaluated, "{name}");
        for (s, c) in t
            .steps
            .iter()
            .filter(|s| s.candidate_id != t.baseline_id)
            .zip(calls.iter())
        {
            assert_eq!(
                c.2, s.val_metric,
                "{name}: logged value differs from the validation result"
            );
            assert_eq!(c.1, t.candidates[&s.candidate_id].genotype);
        }
        let (_, genotype, value) = calls.last().unwrap();
        assert_eq!(o.best_validated_id, select_best_validated(&t));
        assert_eq!(genotype, &t.candidates[&o.best_validated_id].genotype);
        assert_eq!(Some(o.p_test), *value);
        assert_eq!(
            validation_value(&t, o.best_validated_id).unwrap_or(t.baseline_val),
            o.p_val
        );
    }
}

#[test]
fn full_grid_manifest_has_one_line_per_run() {
    let config = GridConfig {
        master_seed: 9,
        budget: 12,
        rounds: 3,
        workers: 4,
        agents: StrategyConfig::NAMES.iter().map(|n| agent(n)).collect(),
        tasks: (0..10)
            .map(|i| generated(&format!("task{i}"), i, i as f64 / 9.0))
            .collect(),
    };
    let out = tempfile::tempdir().unwrap();
    let manifest = run_grid(&config, Path::new("."), out.path()).unwrap();
    assert_eq!(manifest.len(), 210);
    let text = fs::read_to_string(out.path().join("manifest.jsonl")).unwrap();
    assert_eq!(parse_manifest(&text).unwrap(), manifest);
    let ids: BTreeSet<&str> = manifest.iter().map(|m| m.run_id.as_str()).collect();
    assert_eq!(ids.len(), 210);
    for m in &manifest {
        assert_eq!(m.status, RunStatus::Completed, "{}", m.run_id);
        let log = fs::read_to_string(out.path().join(m.log_path.as_ref().unwrap())).unwrap();
        let (t, o) = parse_log(&log).unwrap();
        assert_eq!(t.run_id, m.run_id);
        assert_eq!(t.steps.len(), 12);
        assert!(o.is_some());
    }
    assert!(!out.path().join("manifest.jsonl.tmp").exists());
}

const BROKEN_GRID: &str = r#"
master_seed = 21
budget = 8
rounds = 2
workers = 3

[[agents]]
id = "greedy"
strategy = { name = "greedy" }

[[agents]]
id = "bfts"
strategy = { name = "bfts" }

[[tasks]]
id = "good"
generate = { seed = 4, density = 0.7, dims = 4 }

[[tasks]]
id = "broken"
reach_scale = 1.0

[tasks.external]
validation_cmd = 'echo {"score": 0.5}'
test_cmd = "false"
metric_path = "score"
direction = "maximize"
p_best = 1.0
p_worst = 0.0
p_baseline = 0.4
dims = 3
"#;

#[test]
fn failed_runs_are_isolated() {
    let config = GridConfig::from_toml(BROKEN_GRID).unwrap();
    let out = tempfile::tempdir().unwrap();
    let manifest = run_grid(&config, Path::new("."), out.path()).unwrap();
    assert_eq!(manifest.len(), 8);
    for m in &manifest {
        if m.run_id.contains("__broken__") {
            assert_eq!(m.status, RunStatus::Failed);
            assert!(m.log_path.is_none());
            assert!(
                m.reason
                    .as_ref()
                    .is_some_and(|r| r.contains("test evaluation")),
                "{:?}",
                m.reason
            );
        } else {
            assert_eq!(m.status, RunStatus::Completed);
        }
    }

    // the surviving runs are byte-identical to a grid without the broken task
    let mut clean = config.clone();
    clean.tasks.retain(|t| t.id == "good");
    let out2 = tempfile::tempdir().unwrap();
    run_grid(&clean, Path::new("."), out2.path()).unwrap();
    for m in manifest.iter().filter(|m| m.status == RunStatus::Completed) {
        let rel = m.log_path.as_ref().unwrap();
        assert_eq!(
            fs::read(out.path().join(rel)).unwrap(),
            fs::read(out2.path().join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn configuration_errors_abort_before_any_run() {
    let mut config = GridConfig::from_toml(BROKEN_GRID).unwrap();
    config.tasks[0].generate.as_mut().unwrap().density = 2.0;
    let out = tempfile::tempdir().unwrap();
    let err = run_grid(&config, Path::new("."), out.path()).unwrap_err();
    assert!(err.to_string().contains("tasks[0]"), "{err}");
    assert!(!out.path().join("manifest.jsonl").exists());

    let err = GridConfig::from_toml(&BROKEN_GRID.replace("budget = 8", "budget = \"eight\""))
        .unwrap_err();
    assert!(err.to_string().contains("budget"), "{err}");
}
