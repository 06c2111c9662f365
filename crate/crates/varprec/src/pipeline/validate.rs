//! Trajectory validation: the success oracle.
//!
//! Validation always runs on the plain full-precision pipeline — it never
//! sees a `PrecisionConfig` — and uses zero margin: a trajectory passes only
//! if it is physically collision-free, inside the joint limits, and reaches
//! the goal pose within tolerance.

use serde::{Deserialize, Serialize};

use crate::arm::{forward_kinematics, wrap_angle, ArmModel, Environment, Pose};

use super::PipelineSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    JointLimits,
    EnvCollision,
    SelfCollision,
    TerminalPose,
}

impl Violation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Violation::JointLimits => "joint_limits",
            Violation::EnvCollision => "env_collision",
            Violation::SelfCollision => "self_collision",
            Violation::TerminalPose => "terminal_pose",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// True when every densely interpolated configuration clears the obstacles
/// and itself (zero margin).
pub fn dense_collision_free(
    traj: &[f64],
    horizon: usize,
    env: &Environment,
    model: &ArmModel,
    substeps: usize,
) -> bool {
    check_dense(traj, horizon, env, model, substeps) == (true, true)
}

/// (env_free, self_free) over the dense interpolation.
fn check_dense(
    traj: &[f64],
    horizon: usize,
    env: &Environment,
    model: &ArmModel,
    substeps: usize,
) -> (bool, bool) {
    let n = model.n_joints();
    let pairs = model.self_collision_pairs();
    let mut env_free = true;
    let mut self_free = true;
    let mut config = vec![0.0; n];
    for t in 0..horizon {
        let steps = if t + 1 < horizon { substeps } else { 1 };
        for step in 0..steps {
            let alpha = step as f64 / substeps as f64;
            for j in 0..n {
                config[j] = (1.0 - alpha) * traj[t * n + j]
                    + alpha * traj[((t + 1).min(horizon - 1)) * n + j];
            }
            let (spheres, _) = forward_kinematics(&config, 1, model);
            'env: for s in 0..spheres.n_spheres {
                let (x, y, r) = spheres.sphere(0, s);
                for obs in &env.obstacles {
                    let d = ((x - obs.center[0]).powi(2) + (y - obs.center[1]).powi(2)).sqrt()
                        - obs.radius
                        - r;
                    if d < 0.0 {
                        env_free = false;
                        break 'env;
                    }
                }
            }
            for &(a, b) in &pairs {
                let (ax, ay, ar) = spheres.sphere(0, a);
                let (bx, by, br) = spheres.sphere(0, b);
                let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() - ar - br;
                if d < 0.0 {
                    self_free = false;
                    break;
                }
            }
            if !env_free && !self_free {
                return (env_free, self_free);
            }
        }
    }
    (env_free, self_free)
}

/// Checks a trajectory against the success criteria: dense collision
/// freedom at `validation_substeps`, joint limits at every waypoint, and
/// the terminal pose within the goal tolerances.
pub fn validate_trajectory(
    traj: &[f64],
    goal: &Pose,
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
) -> Validation {
    let n = model.n_joints();
    let horizon = settings.horizon;
    assert_eq!(traj.len(), horizon * n);
    let mut violations = Vec::new();

    for t in 0..horizon {
        if !model.within_limits(&traj[t * n..(t + 1) * n]) {
            violations.push(Violation::JointLimits);
            break;
        }
    }

    let (env_free, self_free) =
        check_dense(traj, horizon, env, model, settings.validation_substeps);
    if !env_free {
        violations.push(Violation::EnvCollision);
    }
    if !self_free {
        violations.push(Violation::SelfCollision);
    }

    let terminal = &traj[(horizon - 1) * n..];
    let (_, poses) = forward_kinematics(terminal, 1, model);
    let dx = poses[0].position[0] - goal.position[0];
    let dy = poses[0].position[1] - goal.position[1];
    let angle_err = wrap_angle(poses[0].angle - goal.angle).abs();
    if dx.hypot(dy) > settings.goal_position_tolerance || angle_err > settings.goal_angle_tolerance
    {
        violations.push(Violation::TerminalPose);
    }

    Validation {
        valid: violations.is_empty(),
        violations,
    }
}
