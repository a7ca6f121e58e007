//! One configuration schema shared by every subcommand: a TOML file with
//! optional sections, each falling back to the library defaults, plus
//! `--set section.key=value` command-line overrides applied on top.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use cameron::cost::CameronConfig;
use cameron::datasets::MixtureWeights;
use cameron::idle::IdleConfig;
use cameron::offline_rl::ComboConfig;

use crate::CliError;

/// Environment, dataset sizes and evaluation settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// chain5, gridworld4x4 or pointmass2d.
    pub env: String,
    /// Episodes generated per dataset tier.
    pub episodes: usize,
    /// Episode length; 0 uses the environment default.
    pub horizon: usize,
    /// Monte-Carlo episodes per policy evaluation.
    pub eval_episodes: usize,
    /// Episodes behind the random/expert normalisation anchors.
    pub anchor_episodes: usize,
    /// Seeds swept by the ablation subcommands; empty means the base seed
    /// only.
    pub seeds: Vec<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            env: "chain5".into(),
            episodes: 60,
            horizon: 0,
            eval_episodes: 200,
            anchor_episodes: 400,
            seeds: vec![],
        }
    }
}

/// Settings of the non-adversarial cost baselines and behaviour cloning.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// Positive-class prior of the positive-unlabelled loss.
    pub oril_phi: f64,
    /// Expert transitions before this step count the high-cost class.
    pub tgr_t0: usize,
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub bc_steps: usize,
    pub bc_batch: usize,
    pub bc_lr: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            oril_phi: 0.5,
            tgr_t0: 50,
            hidden: vec![32, 32],
            steps: 2_000,
            batch: 128,
            lr: 1e-3,
            bc_steps: 2_000,
            bc_batch: 128,
            bc_lr: 5e-2,
        }
    }
}

/// Generator-quality curve settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmdSection {
    pub gammas: Vec<f64>,
    pub checkpoints: Vec<usize>,
    pub n_samples: usize,
    /// Tier names of the target policies (expert, medium, random).
    pub policies: Vec<String>,
}

impl Default for MmdSection {
    fn default() -> Self {
        Self {
            gammas: vec![0.5, 0.9, 0.99],
            checkpoints: vec![0, 50, 100, 200, 400],
            n_samples: 200,
            policies: vec!["expert".into(), "medium".into(), "random".into()],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    /// Future-sample source weights used by the main loop.
    pub mixture: MixtureWeights,
    /// Occupancy-estimation settings for standalone uses (eval-mmd).
    pub idle: IdleConfig,
    /// Conservative offline RL settings for the standalone trainers.
    pub combo: ComboConfig,
    /// Full-loop settings (carries its own idle/combo subsections).
    pub cameron: CameronConfig,
    pub baseline: BaselineSection,
    pub mmd: MmdSection,
}

fn parse_override_value(raw: &str) -> toml::Value {
    // Reuse the TOML value grammar; anything that does not parse is a string.
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, value) = spec.split_once('=').ok_or_else(|| {
        CliError::Config(format!("override `{spec}` is not of the form section.key=value"))
    })?;
    let parts: Vec<&str> = path.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override `{spec}` has an empty path segment")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::Config(format!("override `{spec}`: `{part}` is not a section"))
            })?;
    }
    cursor.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(value.trim()),
    );
    Ok(())
}

/// Reads the optional TOML file, applies the overrides and deserialises into
/// the full schema. Unknown sections or keys are rejected with their path.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    Config::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Full snapshot of the effective configuration, suitable for re-running.
pub fn config_snapshot(config: &Config) -> Result<String, CliError> {
    toml::to_string_pretty(config).map_err(|e| CliError::Runtime(e.to_string()))
}
