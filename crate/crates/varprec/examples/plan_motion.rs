//! One end-to-end motion-generation run under a chosen precision
//! configuration: IK, seeding, trajectory optimization, validation.
//!
//! ```bash
//! cargo run --example plan_motion                     # full precision
//! cargo run --example plan_motion E5M10,E4M3,E2M1,E2M2,E4M3
//! ```

use std::path::Path;

use varprec::config::load_experiment;
use varprec::pipeline::{generate_motion, PrecisionConfig, TensorSlot};

fn main() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exp = load_experiment(&manifest.join("assets/experiment.json")).unwrap();

    let precision = match std::env::args().nth(1) {
        Some(spec) => {
            let mut config = PrecisionConfig::full_precision();
            for (slot, part) in TensorSlot::ALL.iter().zip(spec.split(',')) {
                config.set(*slot, part.trim().parse().expect("format like E5M10"));
            }
            config
        }
        None => PrecisionConfig::full_precision(),
    };
    println!(
        "precision {precision} ({} total bits)\n",
        precision.total_bits()
    );

    // One problem from each bundled environment.
    for (env, problems) in exp.environments.iter().zip(&exp.problem_sets) {
        let problem = &problems[0];
        let (report, sparsity) =
            generate_motion(problem, env, &exp.model, &exp.pipeline, &precision);
        println!(
            "{:12} success={} attempts={} [{:.2}s]",
            env.name, report.success, report.attempts_used, report.wall_time
        );
        if let Some(breakdown) = &report.cost_breakdown {
            println!(
                "             final costs: collision {:.4}, self {:.4}, smooth {:.4}, pose {:.6}",
                breakdown.collision, breakdown.self_collision, breakdown.smoothness, breakdown.pose
            );
        }
        for slot in TensorSlot::ALL {
            print!("  {}={:.2}", slot.as_str(), sparsity.fraction(slot));
        }
        println!(" (zero fractions)\n");
    }
}
