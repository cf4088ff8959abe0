//! Declarative grid configuration (TOML).
//!
//! ```toml
//! master_seed = 7
//! budget = 100
//! rounds = 3
//! workers = 4
//!
//! [[agents]]
//! id = "greedy"
//! strategy = { name = "greedy" }
//!
//! [[tasks]]
//! id = "dense-1"
//! spec = "dense1.task"            # landscape file, relative to the config file
//!
//! [[tasks]]
//! id = "sparse-1"
//! generate = { seed = 11, density = 0.1, dims = 4 }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{generate_landscape, ExternalTaskConfig, LandscapeSpec};
use crate::strategies::StrategyConfig;
use crate::types::MetricDirection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub master_seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default = "default_rounds")]
    pub rounds: u32,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub agents: Vec<AgentEntry>,
    pub tasks: Vec<TaskEntry>,
}

fn default_budget() -> u32 {
    100
}

fn default_rounds() -> u32 {
    3
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: String,
    pub strategy: StrategyConfig,
}

/// Exactly one of `spec`, `generate` or `external` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalTaskConfig>,
    /// Overrides the random-walk reach calibration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach_scale: Option<f64>,
}

/// Inline landscape generation with optional overrides of the noise and
/// failure model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateEntry {
    pub seed: u64,
    pub density: f64,
    pub dims: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<MetricDirection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_val_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_test_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_fail: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_timeout: Option<f64>,
}

impl GenerateEntry {
    pub fn landscape(&self) -> Result<LandscapeSpec> {
        let mut spec = generate_landscape(self.seed, self.density, self.dims)?;
        if let Some(d) = self.direction {
            spec = spec.with_direction(d);
        }
        if let Some(v) = self.noise_val_sigma {
            spec.noise_val_sigma = v;
        }
        if let Some(v) = self.noise_test_sigma {
            spec.noise_test_sigma = v;
        }
        if let Some(v) = self.test_bias {
            spec.test_bias = v;
        }
        if let Some(v) = self.p_fail {
            spec.p_fail = v;
        }
        if let Some(v) = self.p_timeout {
            spec.p_timeout = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl GridConfig {
    /// Parses and validates a configuration. Errors name the offending key path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::ConfigKey {
            path: String::from("."),
            message: e.to_string(),
        })?;
        let cfg: GridConfig =
            serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigKey {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let key = |path: String, message: &str| {
            Err(Error::ConfigKey {
                path,
                message: message.to_string(),
            })
        };
        if self.budget == 0 {
            return key("budget".into(), "must be at least 1");
        }
        if self.rounds == 0 {
            return key("rounds".into(), "must be at least 1");
        }
        if self.workers == 0 {
            return key("workers".into(), "must be at least 1");
        }
        if self.agents.is_empty() {
            return key("agents".into(), "at least one agent is required");
        }
        if self.tasks.is_empty() {
            return key("tasks".into(), "at least one task is required");
        }
        let mut seen = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !valid_id(&a.id) {
                return key(
                    format!("agents[{i}].id"),
                    "ids use [A-Za-z0-9._-] and must not contain `__`",
                );
            }
            if !seen.insert(a.id.as_str()) {
                return key(format!("agents[{i}].id"), "duplicate agent id");
            }
            if let Err(e) = a.strategy.validate() {
                return key(format!("agents[{i}].strategy"), &e.to_string());
            }
        }
        let mut seen = BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if !valid_id(&t.id) {
                return key(
                    format!("tasks[{i}].id"),
                    "ids use [A-Za-z0-9._-] and must not contain `__`",
                );
            }
            if !seen.insert(t.id.as_str()) {
                return key(format!("tasks[{i}].id"), "duplicate task id");
            }
            let sources = [t.spec.is_some(), t.generate.is_some(), t.external.is_some()];
            if sources.iter().filter(|s| **s).count() != 1 {
                return key(
                    format!("tasks[{i}]"),
                    "give exactly one of spec, generate, external",
                );
            }
            if let Some(r) = t.reach_scale {
                if !(r > 0.0 && r.is_finite()) {
                    return key(format!("tasks[{i}].reach_scale"), "must be positive");
                }
            }
        }
        Ok(())
    }

    /// Resolves a task's `spec` path against the configuration file's directory.
    pub fn resolve_path(base_dir: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }
}

/// Ids end up in file names and run ids.
fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.contains("__")
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
        && !id.starts_with('.')
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
master_seed = 7
budget = 20
rounds = 2

[[agents]]
id = "g"
strategy = { name = "greedy" }

[[agents]]
id = "u"
strategy = { name = "uct", num_children = 2 }

[[tasks]]
id = "d"
generate = { seed = 1, density = 0.9, dims = 4, p_fail = 0.0 }
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = GridConfig::from_toml(GOOD).unwrap();
        assert_eq!(cfg.workers, 1);
        assert_eq!(cfg.agents[1].strategy.name(), "uct");
        assert_eq!(GridConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        let spec = cfg.tasks[0].generate.as_ref().unwrap().landscape().unwrap();
        assert_eq!(spec.p_fail, 0.0);
    }

    #[test]
    fn errors_name_key_paths() {
        let bad = GOOD.replace("num_children = 2", "num_children = \"x\"");
        let msg = GridConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(msg.contains("agents[1].strategy"), "{msg}");
        let bad = GOOD.replace("density = 0.9", "density = 0.9, colour = 1");
        let msg = GridConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(msg.contains("tasks[0].generate"), "{msg}");
        let bad = GOOD.replace("id = \"u\"", "id = \"g\"");
        let msg = GridConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(msg.contains("agents[1].id"), "{msg}");
    }

    #[test]
    fn task_needs_one_source() {
        let bad = GOOD.replace("generate = {", "spec = \"x.task\"\ngenerate = {");
        assert!(GridConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn ids_are_file_safe() {
        for id in ["a__b", "../x", "", "a b", ".hidden"] {
            assert!(!valid_id(id), "{id}");
        }
        assert!(valid_id("dense-1.v2"));
    }
}
