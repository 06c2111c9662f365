//! Experiment orchestration: the library entry points behind the CLI
//! subcommands. Each command reads a realized [`Experiment`], writes its
//! deterministic JSON artifacts into the output directory, and leaves
//! wall-clock timing in a `run_meta.json` sidecar so that the primary
//! artifacts replay byte-identically under a fixed seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{ArmModel, Environment, ProblemInstance};
use crate::config::Experiment;
use crate::pipeline::{
    evaluate_success_rate, AttemptStats, EnvEvaluation, PipelineSettings, PrecisionConfig,
    TensorSlot,
};
use crate::search::{
    nsga2_search, per_tensor_binary_search_with, reduce_space, BaselineTargets, ConfigEvaluator,
    Rates, SearchError, SearchOutcome, SlotSearchResult, Trial,
};

#[derive(Debug, Error)]
pub enum OrchestrateError {
    /// Configuration or artifact problems: exit code 2.
    #[error("{0}")]
    Config(String),
    /// The search finished but found nothing feasible: exit code 3. The
    /// flagged artifact is still on disk.
    #[error("{0}")]
    Infeasible(String),
}

impl From<crate::config::ConfigError> for OrchestrateError {
    fn from(e: crate::config::ConfigError) -> Self {
        OrchestrateError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> OrchestrateError {
    OrchestrateError::Config(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OrchestrateError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| OrchestrateError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, OrchestrateError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| OrchestrateError::Config(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), OrchestrateError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)
            .map_err(|e| OrchestrateError::Config(e.to_string()))?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, OrchestrateError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| OrchestrateError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Timing sidecar; the only artifact allowed to differ between replays.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub unix_time_seconds: u64,
    pub elapsed_seconds: f64,
}

fn write_meta(dir: &Path, command: &str, elapsed: f64) -> Result<(), OrchestrateError> {
    let meta = RunMeta {
        command: command.to_string(),
        unix_time_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        elapsed_seconds: elapsed,
    };
    write_json(&dir.join("run_meta.json"), &meta)
}

/// Evaluates configurations by running the full pipeline over the frozen
/// problem sets; `env_filter` restricts to a single environment for
/// per-environment searches.
pub struct PipelineEvaluator<'a> {
    pub model: &'a ArmModel,
    pub environments: &'a [Environment],
    pub problem_sets: &'a [Vec<ProblemInstance>],
    pub settings: &'a PipelineSettings,
    pub env_filter: Option<usize>,
}

impl<'a> PipelineEvaluator<'a> {
    pub fn new(exp: &'a Experiment) -> Self {
        PipelineEvaluator {
            model: &exp.model,
            environments: &exp.environments,
            problem_sets: &exp.problem_sets,
            settings: &exp.pipeline,
            env_filter: None,
        }
    }

    fn indices(&self) -> Vec<usize> {
        match self.env_filter {
            Some(i) => vec![i],
            None => (0..self.environments.len()).collect(),
        }
    }

    /// Full per-environment evaluations (rates, attempts, sparsity).
    pub fn evaluate_full(&self, config: &PrecisionConfig) -> Vec<EnvEvaluation> {
        self.indices()
            .into_iter()
            .map(|i| {
                evaluate_success_rate(
                    &self.problem_sets[i],
                    &self.environments[i],
                    self.model,
                    self.settings,
                    config,
                )
            })
            .collect()
    }
}

impl ConfigEvaluator for PipelineEvaluator<'_> {
    fn evaluate(&self, config: &PrecisionConfig) -> Rates {
        self.evaluate_full(config)
            .into_iter()
            .map(|e| (e.environment, e.success_rate))
            .collect()
    }
}

/// The hidden-threshold mock evaluator, selectable from the CLI for fast
/// plumbing tests: a configuration is feasible iff every slot is at least as
/// wide as its threshold, with the rate degrading by 0.05 per missing bit.
pub struct MockThresholdEvaluator {
    pub thresholds: [u32; 5],
    pub environment_names: Vec<String>,
}

impl ConfigEvaluator for MockThresholdEvaluator {
    fn evaluate(&self, config: &PrecisionConfig) -> Rates {
        let deficit: u32 = config
            .formats()
            .iter()
            .zip(self.thresholds)
            .map(|(f, t)| t.saturating_sub(f.total_bits()))
            .sum();
        let rate = (1.0 - 0.05 * deficit as f64).max(0.0);
        self.environment_names
            .iter()
            .map(|n| (n.clone(), rate))
            .collect()
    }
}

/// Which evaluator a search command should use.
pub enum EvaluatorKind {
    Pipeline,
    MockThresholds([u32; 5]),
}

fn make_evaluator<'a>(
    kind: &EvaluatorKind,
    exp: &'a Experiment,
    env_filter: Option<usize>,
) -> Box<dyn ConfigEvaluator + 'a> {
    match kind {
        EvaluatorKind::Pipeline => Box::new(PipelineEvaluator {
            env_filter,
            ..PipelineEvaluator::new(exp)
        }),
        EvaluatorKind::MockThresholds(t) => Box::new(MockThresholdEvaluator {
            thresholds: *t,
            environment_names: match env_filter {
                Some(i) => vec![exp.environments[i].name.clone()],
                None => exp.environments.iter().map(|e| e.name.clone()).collect(),
            },
        }),
    }
}

/// Per-environment baseline summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineEnvSummary {
    pub success_rate: f64,
    pub successes: usize,
    pub problem_count: usize,
    pub attempt_stats: AttemptStats,
    /// Zero fraction per slot, from the identity-config hook statistics.
    pub sparsity: BTreeMap<String, f64>,
}

/// The `baseline.json` artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineArtifact {
    pub targets: Rates,
    pub environments: BTreeMap<String, BaselineEnvSummary>,
    pub pipeline: PipelineSettings,
    pub problem_counts: BTreeMap<String, usize>,
    /// Generator seed (or source files) of the frozen problem sets.
    pub problem_spec: crate::config::ProblemSpec,
}

pub const BASELINE_FILE: &str = "baseline.json";
pub const PER_TENSOR_FILE: &str = "per_tensor.json";
pub const PROBES_FILE: &str = "probes.jsonl";
pub const TRIALS_FILE: &str = "trials.jsonl";
pub const SEARCH_REPORT_FILE: &str = "search_report.json";
pub const EVAL_FILE: &str = "eval_config.json";

fn ensure_output_dir(exp: &Experiment) -> Result<(), OrchestrateError> {
    fs::create_dir_all(&exp.output_dir).map_err(|e| io_err(&exp.output_dir, e))
}

/// Measures the all-`E8M23` success rates and freezes them as the targets
/// for the whole search. Also writes the generated problem sets for replay.
pub fn cmd_baseline(exp: &Experiment) -> Result<BaselineArtifact, OrchestrateError> {
    let started = std::time::Instant::now();
    ensure_output_dir(exp)?;
    let evaluator = PipelineEvaluator::new(exp);
    let evals = evaluator.evaluate_full(&PrecisionConfig::full_precision());

    let mut targets = Rates::new();
    let mut environments = BTreeMap::new();
    let mut problem_counts = BTreeMap::new();
    for eval in &evals {
        targets.insert(eval.environment.clone(), eval.success_rate);
        let sparsity = TensorSlot::ALL
            .iter()
            .map(|s| (s.as_str().to_string(), eval.sparsity.fraction(*s)))
            .collect();
        environments.insert(
            eval.environment.clone(),
            BaselineEnvSummary {
                success_rate: eval.success_rate,
                successes: eval.successes,
                problem_count: eval.problem_count,
                attempt_stats: eval.attempt_stats,
                sparsity,
            },
        );
        problem_counts.insert(eval.environment.clone(), eval.problem_count);
    }

    let artifact = BaselineArtifact {
        targets,
        environments,
        pipeline: exp.pipeline.clone(),
        problem_counts,
        problem_spec: exp.problem_spec.clone(),
    };
    write_json(&exp.output_dir.join(BASELINE_FILE), &artifact)?;
    for (env, problems) in exp.environments.iter().zip(&exp.problem_sets) {
        write_json(
            &exp.output_dir.join(format!("problems_{}.json", env.name)),
            problems,
        )?;
    }
    write_meta(&exp.output_dir, "baseline", started.elapsed().as_secs_f64())?;
    Ok(artifact)
}

pub fn load_baseline(exp: &Experiment) -> Result<BaselineArtifact, OrchestrateError> {
    let path = exp.output_dir.join(BASELINE_FILE);
    if !path.exists() {
        return Err(OrchestrateError::Config(format!(
            "{} not found; run the baseline command first",
            path.display()
        )));
    }
    read_json(&path)
}

/// The `per_tensor.json` artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerTensorArtifact {
    /// Minimum feasible bitwidth per slot.
    pub minima: BTreeMap<String, u32>,
    pub witnesses: BTreeMap<String, crate::fpcodec::FpFormat>,
    pub monotonic_ok: bool,
    pub reduced_space_size: u64,
    pub reduction_factor: f64,
    pub per_slot_candidates: BTreeMap<String, usize>,
    /// Slots that never reached the baseline, flagged rather than silently
    /// dropped; nonempty means the artifact is partial.
    pub infeasible_slots: Vec<String>,
}

/// One line of `probes.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeLine {
    pub slot: String,
    #[serde(flatten)]
    pub record: crate::search::ProbeRecord,
}

/// Phase 1: binary search per tensor slot, sharing one feasibility memo (the
/// full-precision probe is reused across slots).
///
/// Pipeline probes decide feasibility with an early-stopping success count:
/// a configuration is abandoned as soon as enough problems failed that the
/// target rate is unreachable. The decision is exact; only the work spent on
/// hopeless configurations shrinks.
pub fn cmd_search_per_tensor(
    exp: &Experiment,
    kind: &EvaluatorKind,
) -> Result<PerTensorArtifact, OrchestrateError> {
    let started = std::time::Instant::now();
    ensure_output_dir(exp)?;
    let baseline = load_baseline(exp)?;
    let targets = BaselineTargets {
        targets: baseline.targets.clone(),
    };

    let mut cache: std::collections::HashMap<[crate::fpcodec::FpFormat; 5], bool> =
        std::collections::HashMap::new();
    let mock_eval = match kind {
        EvaluatorKind::MockThresholds(t) => Some(MockThresholdEvaluator {
            thresholds: *t,
            environment_names: exp.environments.iter().map(|e| e.name.clone()).collect(),
        }),
        EvaluatorKind::Pipeline => None,
    };
    let mut feasible = |config: &PrecisionConfig| -> bool {
        if let Some(&hit) = cache.get(&config.formats()) {
            return hit;
        }
        let ok = match &mock_eval {
            Some(mock) => targets.feasible(&mock.evaluate(config)),
            None => exp
                .environments
                .iter()
                .zip(&exp.problem_sets)
                .all(|(env, problems)| {
                    let required = targets.targets.get(&env.name).copied().unwrap_or(1.0);
                    crate::pipeline::feasibility_probe(
                        problems,
                        env,
                        &exp.model,
                        &exp.pipeline,
                        config,
                        required,
                    )
                    .0
                }),
        };
        cache.insert(config.formats(), ok);
        ok
    };

    let mut minima = BTreeMap::new();
    let mut witnesses = BTreeMap::new();
    let mut monotonic_ok = true;
    let mut probe_lines = Vec::new();
    let mut infeasible = Vec::new();
    let mut minima_arr = [32u32; 5];
    for (i, slot) in TensorSlot::ALL.iter().enumerate() {
        match per_tensor_binary_search_with(*slot, &mut feasible) {
            Ok(SlotSearchResult {
                min_bits,
                witness,
                probes,
                monotonic_ok: ok,
                ..
            }) => {
                minima.insert(slot.as_str().to_string(), min_bits);
                witnesses.insert(slot.as_str().to_string(), witness);
                monotonic_ok &= ok;
                minima_arr[i] = min_bits;
                probe_lines.extend(probes.into_iter().map(|record| ProbeLine {
                    slot: slot.as_str().to_string(),
                    record,
                }));
            }
            Err(SearchError::InfeasibleSlot { slot }) => {
                infeasible.push(slot.as_str().to_string());
                minima.insert(slot.as_str().to_string(), 32);
                minima_arr[i] = 32;
            }
            Err(e) => return Err(OrchestrateError::Config(e.to_string())),
        }
    }

    let space = reduce_space(minima_arr);
    let artifact = PerTensorArtifact {
        minima,
        witnesses,
        monotonic_ok,
        reduced_space_size: space.size(),
        reduction_factor: space.reduction_factor(),
        per_slot_candidates: TensorSlot::ALL
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str().to_string(), space.slots[i].len()))
            .collect(),
        infeasible_slots: infeasible.clone(),
    };
    write_json(&exp.output_dir.join(PER_TENSOR_FILE), &artifact)?;
    write_jsonl(&exp.output_dir.join(PROBES_FILE), &probe_lines)?;
    write_meta(
        &exp.output_dir,
        "search-per-tensor",
        started.elapsed().as_secs_f64(),
    )?;
    if infeasible.is_empty() {
        Ok(artifact)
    } else {
        Err(OrchestrateError::Infeasible(format!(
            "slots below baseline even at 32 bits: {}",
            infeasible.join(", ")
        )))
    }
}

pub fn load_per_tensor(exp: &Experiment) -> Result<PerTensorArtifact, OrchestrateError> {
    let path = exp.output_dir.join(PER_TENSOR_FILE);
    if !path.exists() {
        return Err(OrchestrateError::Config(format!(
            "{} not found; run the per-tensor search first",
            path.display()
        )));
    }
    read_json(&path)
}

impl PerTensorArtifact {
    pub fn minima_array(&self) -> [u32; 5] {
        std::array::from_fn(|i| {
            self.minima
                .get(TensorSlot::ALL[i].as_str())
                .copied()
                .unwrap_or(32)
        })
    }
}

/// One scope (joint, or one environment) of the combinatorial search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchScopeResult {
    pub scope: String,
    pub feasible: bool,
    /// The winning trial, or the least-violating one when infeasible.
    pub best: Trial,
    pub evaluations: u64,
    pub trials_file: String,
}

/// The `search_report.json` artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchArtifact {
    pub mode: String,
    pub budget: u64,
    pub space_size: u64,
    pub reduction_factor: f64,
    pub minima: BTreeMap<String, u32>,
    pub results: Vec<SearchScopeResult>,
}

/// Phase 2: NSGA-II over the reduced space. Joint mode runs one search
/// constrained by every environment; per-environment mode mirrors the
/// paper-style result grid with one search per environment.
pub fn cmd_search_combinatorial(
    exp: &Experiment,
    kind: &EvaluatorKind,
) -> Result<SearchArtifact, OrchestrateError> {
    let started = std::time::Instant::now();
    ensure_output_dir(exp)?;
    let baseline = load_baseline(exp)?;
    let per_tensor = load_per_tensor(exp)?;
    let space = reduce_space(per_tensor.minima_array());

    let scopes: Vec<(String, Option<usize>)> = if exp.search.per_environment {
        exp.environments
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), Some(i)))
            .collect()
    } else {
        vec![("joint".to_string(), None)]
    };

    let mut results = Vec::new();
    let mut any_infeasible = false;
    for (scope, env_filter) in scopes {
        let targets = BaselineTargets {
            targets: match env_filter {
                Some(i) => {
                    let name = &exp.environments[i].name;
                    let mut t = Rates::new();
                    t.insert(
                        name.clone(),
                        baseline.targets.get(name).copied().ok_or_else(|| {
                            OrchestrateError::Config(format!(
                                "baseline has no target for environment {name}"
                            ))
                        })?,
                    );
                    t
                }
                None => baseline.targets.clone(),
            },
        };
        let evaluator = make_evaluator(kind, exp, env_filter);
        let trials_file = match env_filter {
            Some(_) => format!("trials_{scope}.jsonl"),
            None => TRIALS_FILE.to_string(),
        };
        let outcome = nsga2_search(
            &space,
            evaluator.as_ref(),
            &targets,
            exp.search.budget,
            &exp.search.nsga2,
            exp.search.master_seed,
        );
        let (feasible, best, trials, evaluations) = match outcome {
            Ok(SearchOutcome {
                best,
                trials,
                evaluations,
            }) => (true, best, trials, evaluations),
            Err(SearchError::NoFeasibleTrial {
                least_violating,
                trials,
                evaluations,
            }) => {
                any_infeasible = true;
                // The flagged trial still ships in the artifact, log included.
                (false, *least_violating, trials, evaluations)
            }
            Err(e) => return Err(OrchestrateError::Config(e.to_string())),
        };
        write_jsonl(&exp.output_dir.join(&trials_file), &trials)?;
        results.push(SearchScopeResult {
            scope,
            feasible,
            best,
            evaluations,
            trials_file,
        });
    }

    let artifact = SearchArtifact {
        mode: if exp.search.per_environment {
            "per_environment".to_string()
        } else {
            "joint".to_string()
        },
        budget: exp.search.budget,
        space_size: space.size(),
        reduction_factor: space.reduction_factor(),
        minima: per_tensor.minima.clone(),
        results,
    };
    write_json(&exp.output_dir.join(SEARCH_REPORT_FILE), &artifact)?;
    write_meta(
        &exp.output_dir,
        "search-combinatorial",
        started.elapsed().as_secs_f64(),
    )?;
    if any_infeasible {
        Err(OrchestrateError::Infeasible(
            "no feasible configuration within budget; least-violating trial flagged in the artifact"
                .into(),
        ))
    } else {
        Ok(artifact)
    }
}

/// The `eval_config.json` artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub config: PrecisionConfig,
    pub total_bits: u32,
    pub environments: BTreeMap<String, EnvEvaluation>,
    /// Present when a baseline exists in the output directory.
    pub feasible_vs_baseline: Option<bool>,
}

/// Evaluates one explicit configuration over every environment, writing the
/// per-problem reports as JSON-lines next to the summary artifact.
pub fn cmd_eval_config(
    exp: &Experiment,
    config: &PrecisionConfig,
) -> Result<EvalArtifact, OrchestrateError> {
    let started = std::time::Instant::now();
    ensure_output_dir(exp)?;
    let mut evals = Vec::new();
    for (env, problems) in exp.environments.iter().zip(&exp.problem_sets) {
        let (reports, eval) = crate::pipeline::evaluate_with_reports(
            problems,
            env,
            &exp.model,
            &exp.pipeline,
            config,
        );
        write_jsonl(
            &exp.output_dir.join(format!("reports_{}.jsonl", env.name)),
            &reports,
        )?;
        evals.push(eval);
    }
    let feasible = match read_json::<BaselineArtifact>(&exp.output_dir.join(BASELINE_FILE)) {
        Ok(b) => {
            let targets = BaselineTargets { targets: b.targets };
            let rates: Rates = evals
                .iter()
                .map(|e| (e.environment.clone(), e.success_rate))
                .collect();
            Some(targets.feasible(&rates))
        }
        Err(_) => None,
    };
    let artifact = EvalArtifact {
        config: *config,
        total_bits: config.total_bits(),
        environments: evals
            .into_iter()
            .map(|e| (e.environment.clone(), e))
            .collect(),
        feasible_vs_baseline: feasible,
    };
    write_json(&exp.output_dir.join(EVAL_FILE), &artifact)?;
    write_meta(
        &exp.output_dir,
        "eval-config",
        started.elapsed().as_secs_f64(),
    )?;
    Ok(artifact)
}

/// Output paths of `cmd_report`.
pub struct ReportPaths {
    pub markdown: PathBuf,
    pub grid_csv: PathBuf,
    pub sizes_iko_csv: PathBuf,
    pub sizes_to_csv: PathBuf,
}

/// Renders the report artifacts from previously written logs; never
/// re-evaluates the pipeline.
pub fn cmd_report(exp: &Experiment) -> Result<ReportPaths, OrchestrateError> {
    let started = std::time::Instant::now();
    let baseline = load_baseline(exp)?;
    let search: SearchArtifact = read_json(&exp.output_dir.join(SEARCH_REPORT_FILE))?;
    let mut trials_by_scope = Vec::new();
    for scope in &search.results {
        let path = exp.output_dir.join(&scope.trials_file);
        let trials: Vec<Trial> = if path.exists() {
            read_jsonl(&path)?
        } else {
            Vec::new()
        };
        if trials.is_empty() && scope.feasible {
            return Err(OrchestrateError::Config(format!(
                "trial log {} is empty",
                path.display()
            )));
        }
        trials_by_scope.push(trials);
    }
    let paths = crate::report::render(exp, &baseline, &search, &trials_by_scope)
        .map_err(|e| OrchestrateError::Config(e))?;
    write_meta(&exp.output_dir, "report", started.elapsed().as_secs_f64())?;
    Ok(paths)
}
