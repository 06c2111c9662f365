//! L-BFGS step direction with a multi-scale line search.
//!
//! One optimizer iteration: evaluate cost and gradient, compute the two-loop
//! step direction from the curvature history, try a fixed ladder of step
//! scales and keep the best strict improvement (ties to the smallest scale),
//! then update the `(s, y)` history. The no-improvement guard makes the cost
//! non-increasing by construction.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LbfgsError {
    #[error("numerical failure at iteration {iteration}: cost or gradient is NaN")]
    NumericalFailure { iteration: usize },
}

/// Optimizer hyperparameters. Echoed into trial logs by the search layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    /// Curvature pairs retained (FIFO).
    pub history: usize,
    /// Step-scale ladder for the line search, strictly increasing.
    pub scales: Vec<f64>,
    /// Pairs with `s.y` at or below this are discarded.
    pub curvature_eps: f64,
    pub max_iterations: usize,
    /// Stop when the gradient norm drops below this.
    pub grad_tolerance: f64,
    /// Stop when one iteration improves the cost by less than this.
    pub cost_tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 10,
            scales: vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0],
            curvature_eps: 1e-10,
            max_iterations: 100,
            grad_tolerance: 1e-5,
            cost_tolerance: 1e-8,
        }
    }
}

/// Curvature history plus the cached last evaluation.
#[derive(Debug, Clone)]
pub struct LbfgsState {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>, // (s, y, 1/s.y)
    capacity: usize,
    curvature_eps: f64,
    cached: Option<(Vec<f64>, Vec<f64>, f64)>, // (theta, grad, cost)
    pub iterations: usize,
}

impl LbfgsState {
    pub fn new(capacity: usize, curvature_eps: f64) -> Self {
        LbfgsState {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
            curvature_eps,
            cached: None,
            iterations: 0,
        }
    }

    pub fn from_config(cfg: &LbfgsConfig) -> Self {
        Self::new(cfg.history, cfg.curvature_eps)
    }

    pub fn history_len(&self) -> usize {
        self.pairs.len()
    }

    /// Stores a displacement/gradient-difference pair; rejects pairs that
    /// violate the curvature condition and evicts the oldest beyond capacity.
    pub fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > self.curvature_eps) {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Two-loop recursion: the quasi-Newton direction `-H * grad`. With an empty
/// history this is steepest descent, `-grad`.
pub fn two_loop_direction(state: &LbfgsState, grad: &[f64]) -> Vec<f64> {
    if state.pairs.is_empty() {
        return grad.iter().map(|g| -g).collect();
    }
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(state.pairs.len());
    for (s, y, rho) in state.pairs.iter().rev() {
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    // Initial Hessian scaling from the most recent pair.
    let (s_last, y_last, _) = state.pairs.back().unwrap();
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, rho), alpha) in state.pairs.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alpha - beta) * si;
        }
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

fn select_scale(
    theta: &[f64],
    direction: &[f64],
    scales: &[f64],
    cost_fn: &mut dyn FnMut(&[f64]) -> f64,
    baseline: Option<f64>,
) -> (Vec<f64>, f64) {
    let mut best_cost = baseline.unwrap_or(f64::INFINITY);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &scale in scales {
        let candidate: Vec<f64> = theta
            .iter()
            .zip(direction)
            .map(|(t, d)| t + scale * d)
            .collect();
        let c = cost_fn(&candidate);
        let c = if c.is_nan() { f64::INFINITY } else { c };
        if c < best_cost {
            best_cost = c;
            best = Some((candidate, scale));
        }
    }
    best.unwrap_or_else(|| (theta.to_vec(), 0.0))
}

/// Evaluates `theta + scale * direction` for every scale and returns the
/// strict-improvement argmin (ties resolve to the smallest scale). Returns
/// `theta` unchanged with scale 0 when nothing beats `cost(theta)`.
pub fn line_search_select(
    theta: &[f64],
    direction: &[f64],
    scales: &[f64],
    mut cost_fn: impl FnMut(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let baseline = cost_fn(theta);
    select_scale(theta, direction, scales, &mut cost_fn, Some(baseline))
}

/// Result of a single optimizer iteration.
#[derive(Debug, Clone)]
pub struct IterateOutcome {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    /// Scale accepted by the line search; 0 means no candidate improved.
    pub scale: f64,
}

/// One full iteration: gradient, direction, line search, history update.
///
/// `cost_and_grad` must be pure. The evaluation at the accepted point is
/// cached in the state, so a driver loop costs one gradient evaluation plus
/// one cost-only evaluation per scale per iteration.
pub fn lbfgs_iterate(
    state: &mut LbfgsState,
    theta: &[f64],
    mut cost_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    scales: &[f64],
) -> Result<IterateOutcome, LbfgsError> {
    let (cost0, grad0) = match state.cached.take() {
        Some((t, g, c)) if t == theta => (c, g),
        _ => {
            let (c, g) = cost_and_grad(theta);
            (c, g)
        }
    };
    if cost0.is_nan() || grad0.iter().any(|g| g.is_nan()) {
        return Err(LbfgsError::NumericalFailure {
            iteration: state.iterations,
        });
    }

    let direction = two_loop_direction(state, &grad0);
    let mut cost_only = |t: &[f64]| cost_and_grad(t).0;
    let (theta_next, scale) = select_scale(theta, &direction, scales, &mut cost_only, Some(cost0));
    state.iterations += 1;

    if scale == 0.0 {
        let grad_norm = norm(&grad0);
        state.cached = Some((theta.to_vec(), grad0, cost0));
        return Ok(IterateOutcome {
            theta: theta.to_vec(),
            cost: cost0,
            grad_norm,
            scale,
        });
    }

    let (cost1, grad1) = cost_and_grad(&theta_next);
    if cost1.is_nan() || grad1.iter().any(|g| g.is_nan()) {
        return Err(LbfgsError::NumericalFailure {
            iteration: state.iterations,
        });
    }
    let s: Vec<f64> = theta_next.iter().zip(theta).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = grad1.iter().zip(&grad0).map(|(a, b)| a - b).collect();
    state.push_pair(s, y);
    let grad_norm = norm(&grad1);
    state.cached = Some((theta_next.clone(), grad1, cost1));
    Ok(IterateOutcome {
        theta: theta_next,
        cost: cost1,
        grad_norm,
        scale,
    })
}

/// Terminal state of a driver run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each iteration; non-increasing.
    pub cost_trace: Vec<f64>,
}

/// Runs iterations until the gradient tolerance, a too-small improvement, a
/// stalled line search, or the iteration cap.
pub fn lbfgs_solve(
    theta0: &[f64],
    cfg: &LbfgsConfig,
    mut cost_and_grad: impl FnMut(&[f64]) -> (f64, Vec<f64>),
) -> Result<Solution, LbfgsError> {
    let mut state = LbfgsState::from_config(cfg);
    let mut theta = theta0.to_vec();
    let mut trace = Vec::new();
    let mut last_cost = f64::INFINITY;
    let mut outcome = None;
    for _ in 0..cfg.max_iterations {
        let out = lbfgs_iterate(&mut state, &theta, &mut cost_and_grad, &cfg.scales)?;
        theta = out.theta.clone();
        trace.push(out.cost);
        let stalled = out.scale == 0.0;
        let improved = last_cost - out.cost;
        last_cost = out.cost;
        let converged = out.grad_norm < cfg.grad_tolerance;
        outcome = Some(out);
        if converged || stalled || improved.abs() < cfg.cost_tolerance {
            break;
        }
    }
    let out = outcome.expect("max_iterations >= 1");
    Ok(Solution {
        theta,
        cost: out.cost,
        grad_norm: out.grad_norm,
        iterations: state.iterations,
        converged: out.grad_norm < cfg.grad_tolerance,
        cost_trace: trace,
    })
}
