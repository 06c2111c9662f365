//! Batched inverse-kinematics optimization.

use rand::Rng;

use super::{Hooks, PipelineError, PipelineSettings, TensorSlot};
use crate::arm::{
    backward_kinematics, bound_cost, collision_eval, collision_field, ee_pose_backward,
    forward_kinematics, pose_cost, self_collision_eval, self_collision_vec, wrap_angle, ArmModel,
    Environment, Pose, SphereGrad,
};
use crate::lbfgs::{lbfgs_solve, LbfgsConfig};
use crate::streams;

/// One accepted terminal configuration.
#[derive(Debug, Clone)]
pub struct IkSolution {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub position_error: f64,
    pub angle_error: f64,
}

/// Cost and gradient of one configuration under the IK objective:
/// pose + collision + self-collision + bound, with the `out_spheres`,
/// `closest_pt`, `out_vec` and `grad_out_spheres` hooks applied.
pub fn ik_cost_and_grad(
    theta: &[f64],
    goal: &Pose,
    env: &Environment,
    model: &ArmModel,
    pairs: &[(usize, usize)],
    settings: &PipelineSettings,
    hooks: &mut Hooks,
) -> (f64, Vec<f64>) {
    let n = model.n_joints();
    let w = &settings.weights;

    let (mut spheres, poses) = forward_kinematics(theta, 1, model);
    hooks.apply(TensorSlot::OutSpheres, &mut spheres.data);

    let mut field = collision_field(&spheres, env);
    hooks.apply(TensorSlot::ClosestPt, &mut field.data);
    let (collision_costs, collision_grad) = collision_eval(&field);

    let mut pair_vec = self_collision_vec(&spheres, pairs, env.activation_margin);
    hooks.apply(TensorSlot::OutVec, &mut pair_vec.data);
    let (self_costs, self_grad) = self_collision_eval(&pair_vec, &spheres, pairs);

    let (pose_c, pose_g) = pose_cost(&poses[0], goal, w.pose_position, w.pose_angle);
    let (bound_costs, bound_grad) = bound_cost(theta, 1, model);

    let mut sphere_grad = SphereGrad::zeros(1, model.n_spheres());
    sphere_grad.scaled_accumulate(&collision_grad, w.collision);
    sphere_grad.scaled_accumulate(&self_grad, w.self_collision);
    hooks.apply(TensorSlot::GradOutSpheres, &mut sphere_grad.data);

    let mut grad = backward_kinematics(theta, 1, &sphere_grad, model);
    ee_pose_backward(theta, pose_g, model, &mut grad);
    for j in 0..n {
        grad[j] += w.bound * bound_grad[j];
    }

    let cost = w.collision * collision_costs[0]
        + w.self_collision * self_costs[0]
        + pose_c
        + w.bound * bound_costs[0];
    (cost, grad)
}

/// Optimizes `ik_seeds` random in-limit initializations against the IK
/// objective and returns the ones whose true end-effector pose lands within
/// the goal tolerances, best cost first. Seed `i` draws from the
/// `(attempt_seed, IK_SEED, i)` stream, so the result is independent of
/// evaluation order.
pub fn solve_ik(
    goal: &Pose,
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
    hooks: &mut Hooks,
    attempt_seed: u64,
) -> Result<Vec<IkSolution>, PipelineError> {
    let pairs = model.self_collision_pairs();
    let cfg = LbfgsConfig {
        max_iterations: settings.ik_iterations,
        ..settings.lbfgs.clone()
    };
    let mut solutions = Vec::new();
    for i in 0..settings.ik_seeds {
        let mut rng = streams::rng_for(streams::derive_path(
            attempt_seed,
            &[streams::IK_SEED, i as u64],
        ));
        let theta0: Vec<f64> = model
            .joint_limits
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        let Ok(sol) = lbfgs_solve(&theta0, &cfg, |t| {
            ik_cost_and_grad(t, goal, env, model, &pairs, settings, hooks)
        }) else {
            continue; // numerical failure: seed marked failed, others continue
        };
        let (_, poses) = forward_kinematics(&sol.theta, 1, model);
        let dx = poses[0].position[0] - goal.position[0];
        let dy = poses[0].position[1] - goal.position[1];
        let position_error = dx.hypot(dy);
        let angle_error = wrap_angle(poses[0].angle - goal.angle).abs();
        if position_error <= settings.goal_position_tolerance
            && angle_error <= settings.goal_angle_tolerance
        {
            solutions.push(IkSolution {
                theta: sol.theta,
                cost: sol.cost,
                position_error,
                angle_error,
            });
        }
    }
    if solutions.is_empty() {
        return Err(PipelineError::NoIkSolution);
    }
    // Best cost first; stable, so equal costs keep seed order.
    solutions.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    Ok(solutions)
}
