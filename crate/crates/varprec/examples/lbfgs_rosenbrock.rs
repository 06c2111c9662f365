//! The optimizer on the Rosenbrock function: two-loop directions plus the
//! multi-scale line search.
//!
//! ```bash
//! cargo run --example lbfgs_rosenbrock
//! ```

use varprec::lbfgs::{lbfgs_solve, LbfgsConfig};

fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
    let (a, b) = (x[0], x[1]);
    let cost = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
    let grad = vec![
        -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
        200.0 * (b - a * a),
    ];
    (cost, grad)
}

fn main() {
    let cfg = LbfgsConfig {
        max_iterations: 500,
        grad_tolerance: 1e-10,
        cost_tolerance: 0.0,
        ..LbfgsConfig::default()
    };
    let start = [-1.2, 1.0];
    let sol = lbfgs_solve(&start, &cfg, rosenbrock).unwrap();
    println!(
        "from {start:?}: reached ({:.6}, {:.6}) in {} iterations",
        sol.theta[0], sol.theta[1], sol.iterations
    );
    println!(
        "final cost {:.3e}, gradient norm {:.3e}",
        sol.cost, sol.grad_norm
    );

    // The cost trace is non-increasing by construction: the line search only
    // ever accepts strict improvements.
    let monotone = sol.cost_trace.windows(2).all(|w| w[1] <= w[0]);
    println!(
        "monotone cost trace over {} iterations: {monotone}",
        sol.cost_trace.len()
    );
    for (i, c) in sol.cost_trace.iter().enumerate().step_by(5) {
        println!("  iter {i:3}: cost {c:.6e}");
    }
}
