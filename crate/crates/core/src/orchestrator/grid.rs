use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::GridConfig;
use super::{calibrate_reach, run_id, run_seed, run_single, RunSpec};
use crate::error::{Error, Result};
use crate::landscape::{Backend, ExternalBackend, LandscapeSpec, SyntheticBackend};
use crate::log::write_log;
use crate::types::{RunOutcome, RunTrajectory};

/// A task with its backend built and reach scale fixed.
pub struct ResolvedTask {
    pub id: String,
    pub backend: Box<dyn Backend>,
    pub reach_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub run_id: String,
    pub status: RunStatus,
    pub log_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Result of one grid cell.
pub struct GridRun {
    pub run_id: String,
    pub result: Result<(RunTrajectory, RunOutcome)>,
}

/// Builds every task backend. Any failure here is a configuration error and
/// happens before a single run starts.
pub fn resolve_tasks(config: &GridConfig, base_dir: &Path) -> Result<Vec<ResolvedTask>> {
    config
        .tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let keyed = |e: Error| Error::ConfigKey {
                path: format!("tasks[{i}]"),
                message: e.to_string(),
            };
            let backend: Box<dyn Backend> = if let Some(p) = &t.spec {
                let path = GridConfig::resolve_path(base_dir, p);
                let text = fs::read_to_string(&path).map_err(|e| keyed(Error::io(&path, e)))?;
                let spec = LandscapeSpec::from_json(&text).map_err(keyed)?;
                Box::new(SyntheticBackend::new(&t.id, spec).map_err(keyed)?)
            } else if let Some(g) = &t.generate {
                Box::new(
                    SyntheticBackend::new(&t.id, g.landscape().map_err(keyed)?).map_err(keyed)?,
                )
            } else if let Some(x) = &t.external {
                Box::new(ExternalBackend::new(&t.id, x.clone()).map_err(keyed)?)
            } else {
                return Err(keyed(Error::Config("no task source".into())));
            };
            let reach_scale = match t.reach_scale {
                Some(r) => r,
                None => {
                    calibrate_reach(backend.as_ref(), config.master_seed, &t.id).map_err(keyed)?
                }
            };
            Ok(ResolvedTask {
                id: t.id.clone(),
                backend,
                reach_scale,
            })
        })
        .collect()
}

/// Runs the full agent × task × round cross product in memory. Results come
/// back in (agent, task, round) order whatever the worker count.
pub fn execute_grid(config: &GridConfig, tasks: &[ResolvedTask]) -> Result<Vec<GridRun>> {
    let mut jobs = Vec::new();
    for agent in &config.agents {
        for task in tasks {
            for round in 0..config.rounds {
                jobs.push((agent, task, round));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let runs = pool.install(|| {
        jobs.par_iter()
            .map(|(agent, task, round)| {
                let spec = RunSpec {
                    run_id: run_id(&agent.id, &task.id, *round),
                    agent_id: agent.id.clone(),
                    task_id: task.id.clone(),
                    round: *round,
                    budget: config.budget,
                    seed: run_seed(config.master_seed, &agent.id, &task.id, *round),
                    reach_scale: task.reach_scale,
                };
                log::info!("run {}", spec.run_id);
                let result = run_single(task.backend.as_ref(), &agent.strategy, &spec);
                if let Err(e) = &result {
                    log::error!("run {} failed: {e}", spec.run_id);
                }
                GridRun {
                    run_id: spec.run_id,
                    result,
                }
            })
            .collect()
    });
    Ok(runs)
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
        .collect()
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Executes a grid and writes `logs/<run_id>.jsonl` plus `manifest.jsonl`
/// under `out_dir`. Returns the manifest; individual run failures are
/// recorded there rather than returned as errors.
pub fn run_grid(
    config: &GridConfig,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>> {
    let tasks = resolve_tasks(config, base_dir)?;
    let logs = out_dir.join("logs");
    fs::create_dir_all(&logs).map_err(|e| Error::io(&logs, e))?;
    let runs = execute_grid(config, &tasks)?;
    let mut manifest = Vec::with_capacity(runs.len());
    for run in runs {
        let entry = match run.result {
            Ok((t, o)) => {
                let rel = format!("logs/{}.jsonl", run.run_id);
                write_file(&out_dir.join(&rel), &write_log(&t, Some(&o)))?;
                ManifestEntry {
                    run_id: run.run_id,
                    status: RunStatus::Completed,
                    log_path: Some(rel),
                    reason: None,
                }
            }
            Err(e) => ManifestEntry {
                run_id: run.run_id,
                status: RunStatus::Failed,
                log_path: None,
                reason: Some(e.to_string()),
            },
        };
        manifest.push(entry);
    }
    // write-then-rename so a crash never leaves a half-written manifest
    let tmp: PathBuf = out_dir.join("manifest.jsonl.tmp");
    write_file(&tmp, &write_manifest(&manifest))?;
    let dest = out_dir.join("manifest.jsonl");
    fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    Ok(manifest)
}
