//! Batch front end: loads an experiment config, applies flag overrides, and
//! dispatches to the orchestration library. Exit codes: 0 success, 2 config
//! or artifact error, 3 search finished infeasible (artifact flagged).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use varprec::config::{load_experiment, Experiment};
use varprec::orchestrate::{
    cmd_baseline, cmd_eval_config, cmd_report, cmd_search_combinatorial, cmd_search_per_tensor,
    EvaluatorKind, OrchestrateError,
};
use varprec::pipeline::{PrecisionConfig, TensorSlot};

#[derive(Parser)]
#[command(
    name = "varprec",
    about = "Per-tensor floating-point format search for a planar-arm motion pipeline"
)]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true, default_value = "experiment.json")]
    config: PathBuf,
    /// Override the search master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap worker parallelism (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure the all-E8M23 success rates and freeze them as targets.
    Baseline,
    /// Phase 1: binary-search the minimum bitwidth of each tensor.
    SearchPerTensor {
        /// Replace the pipeline with the hidden-threshold mock evaluator,
        /// e.g. "16,5,4,5,6" (plumbing tests).
        #[arg(long)]
        mock_thresholds: Option<String>,
    },
    /// Phase 2: constrained NSGA-II over the reduced format space.
    SearchCombinatorial {
        /// Override the unique-evaluation budget.
        #[arg(long)]
        budget: Option<u64>,
        /// One search per environment (result grid) instead of one joint
        /// search.
        #[arg(long)]
        per_env: bool,
        #[arg(long)]
        mock_thresholds: Option<String>,
    },
    /// Render markdown/CSV reports from the logged artifacts.
    Report,
    /// Evaluate one explicit configuration, e.g.
    /// --precision E5M10,E4M3,E2M1,E2M2,E4M3 (slot order: out_spheres,
    /// grad_out_spheres, out_vec, closest_pt, closest_pt_swept).
    EvalConfig {
        #[arg(long)]
        precision: String,
    },
}

fn parse_thresholds(s: &str) -> Result<[u32; 5], String> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let arr: [u32; 5] = parts
        .try_into()
        .map_err(|_| "expected five comma-separated bitwidths".to_string())?;
    Ok(arr)
}

fn parse_precision(s: &str) -> Result<PrecisionConfig, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(format!(
            "expected five comma-separated formats ({} slots: {})",
            TensorSlot::ALL.len(),
            TensorSlot::ALL.map(|t| t.as_str()).join(", ")
        ));
    }
    let mut config = PrecisionConfig::full_precision();
    for (slot, part) in TensorSlot::ALL.iter().zip(parts) {
        config.set(*slot, part.parse().map_err(|e| format!("{part}: {e}"))?);
    }
    Ok(config)
}

fn evaluator_kind(mock: &Option<String>) -> Result<EvaluatorKind, String> {
    match mock {
        Some(s) => Ok(EvaluatorKind::MockThresholds(parse_thresholds(s)?)),
        None => Ok(EvaluatorKind::Pipeline),
    }
}

fn run(cli: Cli) -> Result<(), OrchestrateError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| OrchestrateError::Config(e.to_string()))?;
    }
    let mut exp: Experiment = load_experiment(&cli.config)?;
    if let Some(seed) = cli.seed {
        exp.search.master_seed = seed;
    }
    if let Some(out) = cli.out {
        exp.output_dir = out;
    }

    match cli.command {
        Command::Baseline => {
            let artifact = cmd_baseline(&exp)?;
            for (env, rate) in &artifact.targets {
                println!("baseline {env}: success rate {rate:.3}");
            }
            println!("wrote {}", exp.output_dir.join("baseline.json").display());
        }
        Command::SearchPerTensor { mock_thresholds } => {
            let kind = evaluator_kind(&mock_thresholds).map_err(OrchestrateError::Config)?;
            let artifact = cmd_search_per_tensor(&exp, &kind)?;
            for (slot, bits) in &artifact.minima {
                println!("{slot}: FP{bits} (witness {})", artifact.witnesses[slot]);
            }
            println!(
                "reduced space: {} configurations, {:.2}x reduction",
                artifact.reduced_space_size, artifact.reduction_factor
            );
        }
        Command::SearchCombinatorial {
            budget,
            per_env,
            mock_thresholds,
        } => {
            if let Some(b) = budget {
                exp.search.budget = b;
            }
            if per_env {
                exp.search.per_environment = true;
            }
            let kind = evaluator_kind(&mock_thresholds).map_err(OrchestrateError::Config)?;
            let artifact = cmd_search_combinatorial(&exp, &kind)?;
            for r in &artifact.results {
                println!(
                    "{}: best {} = {} bits (feasible: {}, {} evaluations)",
                    r.scope, r.best.config, r.best.total_bits, r.feasible, r.evaluations
                );
            }
        }
        Command::Report => {
            let paths = cmd_report(&exp)?;
            println!("wrote {}", paths.markdown.display());
            println!("wrote {}", paths.grid_csv.display());
            println!("wrote {}", paths.sizes_iko_csv.display());
            println!("wrote {}", paths.sizes_to_csv.display());
        }
        Command::EvalConfig { precision } => {
            let config = parse_precision(&precision).map_err(OrchestrateError::Config)?;
            let artifact = cmd_eval_config(&exp, &config)?;
            for (env, eval) in &artifact.environments {
                println!(
                    "{env}: success rate {:.3} with {} ({} bits)",
                    eval.success_rate, artifact.config, artifact.total_bits
                );
            }
            if let Some(feasible) = artifact.feasible_vs_baseline {
                println!("feasible vs baseline: {feasible}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(OrchestrateError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(OrchestrateError::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(3)
        }
    }
}
