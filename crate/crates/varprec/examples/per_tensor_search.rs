//! Phase 1 on a small live problem set: binary-search the minimum bitwidth
//! of each tensor slot while the others stay at full precision.
//!
//! Uses a reduced problem count so it finishes in a couple of minutes; the
//! `varprec search-per-tensor` subcommand runs the full experiment.
//!
//! ```bash
//! cargo run --release --example per_tensor_search
//! ```

use std::path::Path;

use varprec::config::load_experiment;
use varprec::pipeline::{evaluate_success_rate, PrecisionConfig, TensorSlot};
use varprec::search::{per_tensor_binary_search_with, reduce_space};

fn main() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let mut exp = load_experiment(&manifest.join("assets/experiment.json")).unwrap();
    // Trim to one environment and a handful of problems for demo speed.
    exp.environments.truncate(2);
    exp.problem_sets.truncate(2);
    for set in &mut exp.problem_sets {
        set.truncate(10);
    }

    // Freeze the baseline targets.
    let fp32 = PrecisionConfig::full_precision();
    let mut targets = Vec::new();
    for (env, problems) in exp.environments.iter().zip(&exp.problem_sets) {
        let eval = evaluate_success_rate(problems, env, &exp.model, &exp.pipeline, &fp32);
        println!("baseline {}: {:.2}", env.name, eval.success_rate);
        targets.push(eval.success_rate);
    }

    let mut minima = [0u32; 5];
    for (i, slot) in TensorSlot::ALL.iter().enumerate() {
        let mut feasible = |config: &PrecisionConfig| {
            exp.environments
                .iter()
                .zip(&exp.problem_sets)
                .zip(&targets)
                .all(|((env, problems), &target)| {
                    varprec::pipeline::feasibility_probe(
                        problems,
                        env,
                        &exp.model,
                        &exp.pipeline,
                        config,
                        target,
                    )
                    .0
                })
        };
        let result = per_tensor_binary_search_with(*slot, &mut feasible).unwrap();
        minima[i] = result.min_bits;
        println!(
            "{:18} min FP{:<2} (witness {}, {} probes, monotone {})",
            slot.as_str(),
            result.min_bits,
            result.witness,
            result.probes.len(),
            result.monotonic_ok
        );
    }

    let space = reduce_space(minima);
    println!(
        "\nreduced space: {} configurations ({:.2}x down from 4,084,101)",
        space.size(),
        space.reduction_factor()
    );
}
