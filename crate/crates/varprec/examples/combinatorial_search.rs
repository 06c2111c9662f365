//! Phase 2 demo: constrained NSGA-II over a reduced format space, shown on
//! the hidden-threshold evaluator so it runs in milliseconds. The same
//! driver runs against the live pipeline in `varprec search-combinatorial`.
//!
//! ```bash
//! cargo run --example combinatorial_search
//! ```

use std::collections::BTreeMap;

use varprec::pipeline::PrecisionConfig;
use varprec::search::{
    nsga2_search, reduce_space, BaselineTargets, ConfigEvaluator, Nsga2Params, Rates,
};

/// Feasible iff every slot is at least as wide as its hidden threshold; the
/// success rate degrades by 0.05 per missing bit.
struct HiddenThresholds([u32; 5]);

impl ConfigEvaluator for HiddenThresholds {
    fn evaluate(&self, config: &PrecisionConfig) -> Rates {
        let deficit: u32 = config
            .formats()
            .iter()
            .zip(self.0)
            .map(|(f, t)| t.saturating_sub(f.total_bits()))
            .sum();
        let mut rates = BTreeMap::new();
        rates.insert("mock".to_string(), (1.0 - 0.05 * deficit as f64).max(0.0));
        rates
    }
}

fn main() {
    let thresholds = [16, 5, 4, 5, 6];
    let evaluator = HiddenThresholds(thresholds);
    let targets = BaselineTargets {
        targets: [("mock".to_string(), 1.0)].into_iter().collect(),
    };

    // Phase 1 would discover exactly these minima; reduce the space with
    // them and let the evolutionary search find the cheapest combination.
    let space = reduce_space(thresholds);
    println!(
        "reduced space: {} configurations ({:.2}x reduction)",
        space.size(),
        space.reduction_factor()
    );

    let outcome = nsga2_search(
        &space,
        &evaluator,
        &targets,
        500,
        &Nsga2Params::default(),
        7,
    )
    .expect("the floor is reachable");
    println!(
        "best: {} = {} bits after {} unique evaluations ({} trials logged)",
        outcome.best.config,
        outcome.best.total_bits,
        outcome.evaluations,
        outcome.trials.len()
    );
    println!(
        "optimum is the sum of thresholds: {} bits",
        thresholds.iter().sum::<u32>()
    );

    // The log is ordered by trial id; show how feasibility and bits evolve.
    for t in outcome.trials.iter().step_by(60) {
        println!(
            "  trial {:3}: {} bits, feasible {}, violation {:.2}",
            t.id, t.total_bits, t.feasible, t.violation
        );
    }
}
