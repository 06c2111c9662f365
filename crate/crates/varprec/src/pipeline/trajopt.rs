//! Trajectory seeding and trajectory optimization.

use super::{validate::dense_collision_free, CostWeights, Hooks, PipelineSettings, TensorSlot};
use crate::arm::{
    backward_kinematics, bound_cost, collision_field, ee_pose_backward, forward_kinematics,
    pose_cost, self_collision_eval, self_collision_vec, swept_eval, swept_joint_grad,
    swept_sphere_rows, ArmModel, Environment, Pose, SphereSet,
};
use crate::lbfgs::{lbfgs_solve, LbfgsConfig, LbfgsError};

/// An initial trajectory for the optimizer. `flagged` marks seeds whose
/// direct and retract interpolations both collided; they are kept anyway
/// since optimization may repair them.
#[derive(Debug, Clone)]
pub struct TrajectorySeed {
    /// Flat `[waypoint][joint]`.
    pub trajectory: Vec<f64>,
    pub flagged: bool,
    pub via_retract: bool,
}

/// Linear joint-space interpolation with `horizon` waypoints.
pub fn linear_trajectory(from: &[f64], to: &[f64], horizon: usize) -> Vec<f64> {
    let n = from.len();
    let mut traj = Vec::with_capacity(horizon * n);
    for t in 0..horizon {
        let u = t as f64 / (horizon - 1) as f64;
        for j in 0..n {
            traj.push((1.0 - u) * from[j] + u * to[j]);
        }
    }
    traj
}

/// Two-segment interpolation through the retract posture: the first half of
/// the horizon steers to `via`, the second half on to `to`.
fn retract_trajectory(from: &[f64], via: &[f64], to: &[f64], horizon: usize) -> Vec<f64> {
    let n = from.len();
    let mut traj = Vec::with_capacity(horizon * n);
    for t in 0..horizon {
        let u = t as f64 / (horizon - 1) as f64;
        if u <= 0.5 {
            let v = 2.0 * u;
            for j in 0..n {
                traj.push((1.0 - v) * from[j] + v * via[j]);
            }
        } else {
            let v = 2.0 * u - 1.0;
            for j in 0..n {
                traj.push((1.0 - v) * via[j] + v * to[j]);
            }
        }
    }
    traj
}

/// Builds one seed trajectory per IK solution (the solutions are already
/// ranked, so the first `to_seeds` are the best): direct interpolation when
/// its dense collision check passes, otherwise through the retract posture,
/// otherwise the direct seed flagged for repair.
pub fn seed_trajectories(
    start: &[f64],
    ik_solutions: &[super::IkSolution],
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
) -> Vec<TrajectorySeed> {
    let horizon = settings.horizon;
    let substeps = settings.validation_substeps;
    ik_solutions
        .iter()
        .take(settings.to_seeds)
        .map(|sol| {
            let direct = linear_trajectory(start, &sol.theta, horizon);
            if dense_collision_free(&direct, horizon, env, model, substeps) {
                return TrajectorySeed {
                    trajectory: direct,
                    flagged: false,
                    via_retract: false,
                };
            }
            let via = retract_trajectory(start, &model.retract_config, &sol.theta, horizon);
            if dense_collision_free(&via, horizon, env, model, substeps) {
                return TrajectorySeed {
                    trajectory: via,
                    flagged: false,
                    via_retract: true,
                };
            }
            // Both interpolations collide: keep the less-penetrating one,
            // flagged, and let the optimizer try to repair it.
            let cost_of =
                |t: &[f64]| crate::arm::swept_collision_cost(t, horizon, env, model, substeps).0;
            let (trajectory, via_retract) = if cost_of(&via) < cost_of(&direct) {
                (via, true)
            } else {
                (direct, false)
            };
            TrajectorySeed {
                trajectory,
                flagged: true,
                via_retract,
            }
        })
        .collect()
}

/// Finite-difference velocity and acceleration penalty over a trajectory,
/// with its gradient (flat `[waypoint][joint]`).
pub fn smoothness_cost(
    traj: &[f64],
    horizon: usize,
    n: usize,
    weights: &CostWeights,
) -> (f64, Vec<f64>) {
    let wv = weights.smooth_velocity;
    let wa = weights.smooth_acceleration;
    let mut cost = 0.0;
    let mut grad = vec![0.0; horizon * n];
    for t in 0..horizon - 1 {
        for j in 0..n {
            let v = traj[(t + 1) * n + j] - traj[t * n + j];
            cost += wv * v * v;
            grad[(t + 1) * n + j] += 2.0 * wv * v;
            grad[t * n + j] -= 2.0 * wv * v;
        }
    }
    for t in 1..horizon - 1 {
        for j in 0..n {
            let a = traj[(t + 1) * n + j] - 2.0 * traj[t * n + j] + traj[(t - 1) * n + j];
            cost += wa * a * a;
            grad[(t + 1) * n + j] += 2.0 * wa * a;
            grad[t * n + j] -= 4.0 * wa * a;
            grad[(t - 1) * n + j] += 2.0 * wa * a;
        }
    }
    (cost, grad)
}

/// Result of optimizing one seed trajectory.
#[derive(Debug, Clone)]
pub struct OptimizedTrajectory {
    pub trajectory: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
}

/// Cost and gradient of a full trajectory under the TO objective: swept
/// collision, per-waypoint self-collision, smoothness, bounds and terminal
/// pose. Hooks: `out_spheres` at every FK call, `closest_pt_swept` on the
/// swept field, `out_vec` on the penetration vector, `grad_out_spheres` on
/// each aggregated sphere gradient before its backward pass. The returned
/// gradient covers all waypoints; the caller clamps the start.
pub fn to_cost_and_grad(
    traj: &[f64],
    goal: &Pose,
    env: &Environment,
    model: &ArmModel,
    pairs: &[(usize, usize)],
    settings: &PipelineSettings,
    hooks: &mut Hooks,
) -> (f64, Vec<f64>) {
    let n = model.n_joints();
    let horizon = settings.horizon;
    let w = &settings.weights;

    // Swept collision over the interpolated sweep rows.
    let (mut sweep_spheres, configs, support) =
        swept_sphere_rows(traj, horizon, model, settings.interpolation_substeps);
    hooks.apply(TensorSlot::OutSpheres, &mut sweep_spheres.data);
    let mut field = collision_field(&sweep_spheres, env);
    hooks.apply(TensorSlot::ClosestPtSwept, &mut field.data);
    let (swept_cost, mut swept_grad_rows) = swept_eval(&field);
    for g in swept_grad_rows.data.iter_mut() {
        *g *= w.collision;
    }
    hooks.apply(TensorSlot::GradOutSpheres, &mut swept_grad_rows.data);
    let mut grad = swept_joint_grad(&configs, &swept_grad_rows, &support, model, horizon);

    // Self-collision at the waypoints. Waypoint rows of the sweep already
    // carry the out_spheres hook; reuse them instead of re-running FK.
    let substeps = settings.interpolation_substeps;
    let mut wp_spheres = SphereSet::zeros(horizon, model.n_spheres());
    for t in 0..horizon {
        let row = t * substeps; // waypoint t's row in the sweep
        let len = model.n_spheres() * 3;
        wp_spheres.data[t * len..(t + 1) * len]
            .copy_from_slice(&sweep_spheres.data[row * len..(row + 1) * len]);
    }
    let mut pair_vec = self_collision_vec(&wp_spheres, pairs, env.activation_margin);
    hooks.apply(TensorSlot::OutVec, &mut pair_vec.data);
    let (self_costs, mut self_grad) = self_collision_eval(&pair_vec, &wp_spheres, pairs);
    for g in self_grad.data.iter_mut() {
        *g *= w.self_collision;
    }
    hooks.apply(TensorSlot::GradOutSpheres, &mut self_grad.data);
    let self_joint = backward_kinematics(traj, horizon, &self_grad, model);
    for (g, s) in grad.iter_mut().zip(&self_joint) {
        *g += s;
    }

    // Smoothness, bounds, terminal pose: small tensors, never hooked.
    let (smooth_cost, smooth_grad) = smoothness_cost(traj, horizon, n, w);
    for (g, s) in grad.iter_mut().zip(&smooth_grad) {
        *g += s;
    }
    let (bound_costs, bound_grad) = bound_cost(traj, horizon, model);
    for (g, b) in grad.iter_mut().zip(&bound_grad) {
        *g += w.bound * b;
    }
    let terminal = &traj[(horizon - 1) * n..];
    let (_, poses) = forward_kinematics(terminal, 1, model);
    let (pose_c, pose_g) = pose_cost(&poses[0], goal, w.pose_position, w.pose_angle);
    ee_pose_backward(terminal, pose_g, model, &mut grad[(horizon - 1) * n..]);

    let cost = w.collision * swept_cost
        + w.self_collision * self_costs.iter().sum::<f64>()
        + smooth_cost
        + w.bound * bound_costs.iter().sum::<f64>()
        + pose_c;
    (cost, grad)
}

/// Optimizes the free waypoints of a seed (everything but the clamped start)
/// with L-BFGS.
pub fn optimize_trajectory(
    seed: &[f64],
    goal: &Pose,
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
    hooks: &mut Hooks,
) -> Result<OptimizedTrajectory, LbfgsError> {
    let n = model.n_joints();
    let horizon = settings.horizon;
    assert_eq!(seed.len(), horizon * n);
    let pairs = model.self_collision_pairs();
    let start: Vec<f64> = seed[..n].to_vec();
    let vars0: Vec<f64> = seed[n..].to_vec();
    let cfg = LbfgsConfig {
        max_iterations: settings.to_iterations,
        ..settings.lbfgs.clone()
    };
    let mut traj = vec![0.0; horizon * n];
    traj[..n].copy_from_slice(&start);
    let sol = lbfgs_solve(&vars0, &cfg, |vars| {
        traj[n..].copy_from_slice(vars);
        let (cost, full_grad) = to_cost_and_grad(&traj, goal, env, model, &pairs, settings, hooks);
        (cost, full_grad[n..].to_vec())
    })?;
    let mut out = vec![0.0; horizon * n];
    out[..n].copy_from_slice(&start);
    out[n..].copy_from_slice(&sol.theta);
    Ok(OptimizedTrajectory {
        trajectory: out,
        cost: sol.cost,
        iterations: sol.iterations,
    })
}
