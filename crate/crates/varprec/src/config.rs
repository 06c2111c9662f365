//! Experiment configuration: one JSON document naming the model, the
//! environments, the problem set, pipeline settings and search settings.
//!
//! Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmModel, Environment, ProblemInstance};
use crate::pipeline::PipelineSettings;
use crate::search::Nsga2Params;
use crate::streams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Search-phase settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSettings {
    /// Unique-evaluation budget for the combinatorial phase.
    pub budget: u64,
    pub nsga2: Nsga2Params,
    /// Master seed; every random choice in the search derives from it.
    pub master_seed: u64,
    /// Run one combinatorial search per environment (a grid of results)
    /// instead of one search constrained by all environments jointly.
    pub per_environment: bool,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            budget: 500,
            nsga2: Nsga2Params::default(),
            master_seed: 0,
            per_environment: false,
        }
    }
}

/// Where problems come from: generated on the fly (and written out for
/// replay) or loaded from explicit files, one per environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Generate { count: usize, generator_seed: u64 },
    Files { files: Vec<PathBuf> },
}

/// The on-disk experiment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub environments: Vec<PathBuf>,
    pub problems: ProblemSpec,
    #[serde(default)]
    pub pipeline: PipelineSettings,
    #[serde(default)]
    pub search: SearchSettings,
    pub output_dir: PathBuf,
}

/// A fully loaded experiment: parsed model and environments plus one frozen
/// problem set per environment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: ArmModel,
    pub environments: Vec<Environment>,
    /// Problem sets aligned with `environments`.
    pub problem_sets: Vec<Vec<ProblemInstance>>,
    /// Where the problem sets came from, echoed into artifacts for replay.
    pub problem_spec: ProblemSpec,
    pub pipeline: PipelineSettings,
    pub search: SearchSettings,
    pub output_dir: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        read_json(path)
    }

    /// Resolves paths, parses every referenced file, validates, and freezes
    /// the problem sets.
    pub fn realize(&self, base_dir: &Path) -> Result<Experiment, ConfigError> {
        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };

        let model: ArmModel = read_json(&resolve(&self.model))?;
        model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        if self.environments.is_empty() {
            return Err(ConfigError::Invalid("no environments configured".into()));
        }
        let mut environments = Vec::new();
        for path in &self.environments {
            let env: Environment = read_json(&resolve(path))?;
            env.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            environments.push(env);
        }
        let mut names: Vec<&str> = environments.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != environments.len() {
            return Err(ConfigError::Invalid(
                "environment names must be unique".into(),
            ));
        }

        self.pipeline.validate().map_err(ConfigError::Invalid)?;
        if !(self.search.nsga2.population >= 2) {
            return Err(ConfigError::Invalid("population must be >= 2".into()));
        }

        let problem_sets = match &self.problems {
            ProblemSpec::Generate {
                count,
                generator_seed,
            } => {
                if *count == 0 {
                    return Err(ConfigError::Invalid("problem count must be > 0".into()));
                }
                environments
                    .iter()
                    .enumerate()
                    .map(|(i, env)| {
                        crate::pipeline::generate_problems(
                            env,
                            &model,
                            *count,
                            streams::derive_path(*generator_seed, &[streams::PROBLEM, i as u64]),
                        )
                        .map_err(|e| ConfigError::Invalid(e.to_string()))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
            ProblemSpec::Files { files } => {
                if files.len() != environments.len() {
                    return Err(ConfigError::Invalid(format!(
                        "{} problem files for {} environments",
                        files.len(),
                        environments.len()
                    )));
                }
                let mut sets = Vec::new();
                for (path, env) in files.iter().zip(&environments) {
                    let problems: Vec<ProblemInstance> = read_json(&resolve(path))?;
                    if problems.is_empty() {
                        return Err(ConfigError::Invalid(format!(
                            "problem set {} is empty",
                            path.display()
                        )));
                    }
                    for p in &problems {
                        if p.start_config.len() != model.n_joints() {
                            return Err(ConfigError::Invalid(format!(
                                "problem in {} has {} joints, model has {}",
                                path.display(),
                                p.start_config.len(),
                                model.n_joints()
                            )));
                        }
                        if !model.within_limits(&p.start_config) {
                            return Err(ConfigError::Invalid(format!(
                                "start config outside joint limits in {} ({})",
                                path.display(),
                                env.name
                            )));
                        }
                    }
                    sets.push(problems);
                }
                sets
            }
        };

        Ok(Experiment {
            model,
            environments,
            problem_sets,
            problem_spec: self.problems.clone(),
            pipeline: self.pipeline.clone(),
            search: self.search.clone(),
            output_dir: resolve(&self.output_dir),
        })
    }
}

/// Loads and realizes a config file in one step.
pub fn load_experiment(config_path: &Path) -> Result<Experiment, ConfigError> {
    let cfg = ExperimentConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    cfg.realize(base)
}
