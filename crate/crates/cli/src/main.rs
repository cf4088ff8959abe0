//! `searchlab`: generate landscapes, run grids, analyze logs, render reports.
//!
//! Exit codes: 0 success, 1 partial failure, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use searchlab::analysis::{
    aggregate, aggregate_csv, convergence_csv, convergence_curves, correlate, correlate_by_agent,
    correlate_by_partition, correlation_csv, fingerprint, fingerprint_csv, partition_by_density,
    partition_csv, task_phi, AggregateMode, FINAL_METRIC,
};
use searchlab::cards::parse_cards;
use searchlab::landscape::generate_landscape;
use searchlab::log::parse_log;
use searchlab::metrics::{compute_row, pairwise_win_rate, write_metrics_csv, MetricsRow};
use searchlab::orchestrator::{run_grid, GridConfig, RunStatus};
use searchlab::report::write_report;
use searchlab::{MetricDirection, Partition, RunTrajectory, TaskCard};

#[derive(Parser)]
#[command(name = "searchlab", version, about = "Search-strategy laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic landscape specification.
    Gen {
        #[arg(long)]
        seed: u64,
        /// Opportunity density in [0, 1].
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 16)]
        dims: usize,
        #[arg(long, value_parser = parse_direction)]
        direction: Option<MetricDirection>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute every (agent, task, round) of a grid configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the worker count of the configuration.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute metrics and statistics tables from trajectory logs.
    Analyze {
        /// A run directory (with `logs/`) or a directory of `.jsonl` logs.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Write pooled, per-partition and per-agent correlation tables.
        #[arg(long)]
        correlate: bool,
        /// Write the dense/sparse partition table.
        #[arg(long)]
        partition: bool,
        /// Write mean / best / std aggregate tables and win rates.
        #[arg(long)]
        aggregate: bool,
        /// Task-card table; when given, the partition uses its φ column.
        #[arg(long)]
        cards: Option<PathBuf>,
    },
    /// Render plots and their data twins from an analysis directory.
    Report {
        #[arg(long)]
        analysis: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_direction(s: &str) -> Result<MetricDirection, String> {
    s.parse().map_err(|e: searchlab::Error| e.to_string())
}

/// Errors that map to exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let level = std::env::var("SEARCHLAB_LOG_LEVEL").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new().parse_filters(&level).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Returns `Ok(false)` on partial failure.
fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Gen {
            seed,
            density,
            dims,
            direction,
            out,
        } => {
            let mut spec =
                generate_landscape(seed, density, dims).map_err(|e| usage(e.to_string()))?;
            if let Some(d) = direction {
                spec = spec.with_direction(d);
            }
            write(&out, &spec.to_json())?;
            Ok(true)
        }
        Command::Run {
            config,
            workers,
            out_dir,
        } => cmd_run(&config, workers, &out_dir),
        Command::Analyze {
            runs,
            out_dir,
            correlate,
            partition,
            aggregate,
            cards,
        } => cmd_analyze(
            &runs,
            &out_dir,
            correlate,
            partition,
            aggregate,
            cards.as_deref(),
        ),
        Command::Report { analysis, out_dir } => {
            if !analysis.join("metrics.csv").exists() {
                return Err(usage(format!("{} has no metrics.csv", analysis.display())));
            }
            let files = write_report(&analysis, &out_dir)?;
            for f in files {
                println!("{}", out_dir.join(f).display());
            }
            Ok(true)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(config_path: &Path, workers: Option<usize>, out_dir: &Path) -> Result<bool> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| usage(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = GridConfig::from_toml(&text).map_err(|e| usage(e.to_string()))?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        config.workers = w;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let manifest = run_grid(&config, base, out_dir).map_err(|e| match e {
        searchlab::Error::Io { .. } => anyhow::Error::new(e),
        other => usage(other.to_string()),
    })?;
    let failed = manifest
        .iter()
        .filter(|m| m.status == RunStatus::Failed)
        .count();
    println!("{} runs, {} failed", manifest.len(), failed);
    Ok(failed == 0)
}

fn log_files(runs: &Path) -> Result<Vec<PathBuf>> {
    let dir = if runs.join("logs").is_dir() {
        runs.join("logs")
    } else {
        runs.to_path_buf()
    };
    let entries =
        fs::read_dir(&dir).map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "jsonl")
                && p.file_name().is_some_and(|n| n != "manifest.jsonl")
        })
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_analyze(
    runs: &Path,
    out_dir: &Path,
    want_corr: bool,
    want_partition: bool,
    want_aggregate: bool,
    cards: Option<&Path>,
) -> Result<bool> {
    let files = log_files(runs)?;
    if files.is_empty() {
        return Err(usage(format!(
            "no trajectory logs under {}",
            runs.display()
        )));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut trajectories: Vec<RunTrajectory> = Vec::new();
    let mut all_ok = true;
    for f in &files {
        let parsed = fs::read_to_string(f)
            .map_err(anyhow::Error::from)
            .and_then(|t| parse_log(&t).map_err(anyhow::Error::from))
            .and_then(|(t, o)| {
                let o = o.context("log has no outcome record")?;
                let row = compute_row(&t, &o)?;
                Ok((t, row))
            });
        match parsed {
            Ok((t, row)) => {
                trajectories.push(t);
                rows.push(row);
            }
            Err(e) => {
                eprintln!("skipping {}: {e:#}", f.display());
                all_ok = false;
            }
        }
    }
    if rows.is_empty() {
        return Err(usage("no log could be parsed"));
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write(&out_dir.join("metrics.csv"), &write_metrics_csv(&rows)?)?;
    write(
        &out_dir.join("convergence.csv"),
        &convergence_csv(&convergence_curves(&trajectories)?),
    )?;
    write(
        &out_dir.join("fingerprint.csv"),
        &fingerprint_csv(&fingerprint(&rows)),
    )?;

    let card_table: Option<Vec<TaskCard>> = match cards {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            Some(parse_cards(&text).map_err(|e| usage(e.to_string()))?)
        }
        None => None,
    };
    let (phi, partition) = match &card_table {
        Some(cards) => {
            let phi: BTreeMap<String, f64> = cards
                .iter()
                .filter_map(|c| c.phi_opp.map(|v| (c.task_id.clone(), v)))
                .collect();
            if phi.is_empty() {
                return Err(usage("task cards carry no phi_opp values"));
            }
            let part = partition_by_density(&phi)?;
            (phi, part)
        }
        None => {
            let phi = task_phi(&rows);
            let part = partition_by_density(&phi)?;
            (phi, part)
        }
    };
    if want_partition {
        write(
            &out_dir.join("partition.csv"),
            &partition_csv(&phi, &partition),
        )?;
        let dense = partition
            .values()
            .filter(|p| **p == Partition::Dense)
            .count();
        println!(
            "partition: {dense} dense / {} sparse",
            partition.len() - dense
        );
    }
    if want_corr {
        write(
            &out_dir.join("correlations_pooled.csv"),
            &correlation_csv(&correlate(&rows, "pooled")?),
        )?;
        write(
            &out_dir.join("correlations_partition.csv"),
            &correlation_csv(&correlate_by_partition(&rows, &partition)?),
        )?;
        write(
            &out_dir.join("correlations_by_agent.csv"),
            &correlation_csv(&correlate_by_agent(&rows)?),
        )?;
    }
    if want_aggregate {
        for mode in AggregateMode::ALL {
            let table = aggregate(&rows, FINAL_METRIC, mode);
            write(
                &out_dir.join(format!("aggregate_{}.csv", mode.as_str())),
                &aggregate_csv(&table),
            )?;
        }
        match win_rates(&rows, &trajectories) {
            Ok(text) => write(&out_dir.join("win_rate.csv"), &text)?,
            Err(e) => eprintln!("win rate skipped: {e:#}"),
        }
    }
    Ok(all_ok)
}

/// Win rate on per-cell mean raw test metrics; directions come from the logged cards.
fn win_rates(rows: &[MetricsRow], trajectories: &[RunTrajectory]) -> Result<String> {
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = sums
            .entry((r.agent_id.clone(), r.task_id.clone()))
            .or_default();
        e.0 += r.p_test;
        e.1 += 1;
    }
    let raw: BTreeMap<(String, String), f64> = sums
        .into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect();
    let cards: BTreeMap<String, TaskCard> = trajectories
        .iter()
        .map(|t| (t.task_id.clone(), t.card.clone()))
        .collect();
    let wr = pairwise_win_rate(&raw, &cards)?;
    let mut out = String::from("agent,win_rate\n");
    for (a, v) in wr {
        out.push_str(&format!("{a},{v}\n"));
    }
    Ok(out)
}
