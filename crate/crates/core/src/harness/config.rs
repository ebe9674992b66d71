//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::environment::{Environment, Instance};
use crate::error::{PbrlError, Result};
use crate::mdp::{enumerate_policy_pool, PoolMode, DEFAULT_TRAJECTORY_CAP};

use super::generate::{generate_environment, GenerationReport, GeneratorSpec};

fn default_trajectory_cap() -> usize {
    DEFAULT_TRAJECTORY_CAP
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_true() -> bool {
    true
}

/// How the pool of candidate policies is built from the MDP dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub mode: PoolMode,
    pub cap: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(flatten)]
    pub instance: Instance,
    pub pool: PoolSpec,
    #[serde(default = "default_trajectory_cap")]
    pub trajectory_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentSpec {
    /// A fixed environment given in full.
    Instance(InstanceSpec),
    /// A random environment drawn from a seeded generator.
    Generator(GeneratorSpec),
}

impl EnvironmentSpec {
    /// Builds the environment for a run with seed `seed`.
    pub fn build(&self, seed: u64) -> Result<(Environment, Option<GenerationReport>)> {
        match self {
            EnvironmentSpec::Instance(spec) => {
                let mdp = &spec.instance.mdp;
                let pool = enumerate_policy_pool(
                    mdp.num_states(),
                    mdp.num_actions(),
                    mdp.horizon(),
                    spec.pool.mode,
                    spec.pool.cap,
                    spec.pool.seed,
                )?;
                let env = Environment::from_instance(spec.instance.clone(), pool, spec.trajectory_cap)?;
                Ok((env, None))
            }
            EnvironmentSpec::Generator(spec) => {
                let (env, report) = generate_environment(spec, seed)?;
                Ok((env, Some(report)))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmitOptions {
    /// Record per-episode wall time. Runs that emit it are not replayable
    /// byte for byte.
    #[serde(default)]
    pub wall_time: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    #[serde(rename = "K")]
    pub episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub emit: EmitOptions,
    /// Write the per-episode JSONL log next to the manifest.
    #[serde(default = "default_true")]
    pub write_records: bool,
}

impl HarnessConfig {
    pub fn new(episodes: usize) -> Self {
        Self {
            episodes,
            seeds: default_seeds(),
            out: None,
            emit: EmitOptions::default(),
            write_records: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub agent: AgentConfig,
    pub harness: HarnessConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.harness.episodes == 0 {
            return Err(PbrlError::InvalidArgument("K must be positive".into()));
        }
        self.agent.validate()
    }
}

/// A config file holds one experiment or a list of them.
#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    One(Box<ExperimentConfig>),
    Many(Vec<ExperimentConfig>),
}

pub fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path)?;
    let configs = match serde_json::from_str::<ConfigFile>(&text) {
        Ok(ConfigFile::One(c)) => vec![*c],
        Ok(ConfigFile::Many(v)) => v,
        // Retry as a single config so that the error names the bad field.
        Err(_) => vec![serde_json::from_str::<ExperimentConfig>(&text)?],
    };
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}
