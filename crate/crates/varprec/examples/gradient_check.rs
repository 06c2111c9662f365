//! Finite-difference verification of the arm testbed's analytic gradients.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use varprec::arm::{
    backward_kinematics, bound_cost, collision_cost, forward_kinematics, pose_cost,
    self_collision_cost, swept_collision_cost, ArmModel, Circle, Environment, Pose,
};

fn max_rel_error(analytic: &[f64], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / f.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn main() {
    let model = ArmModel::default_7link();
    let env = Environment {
        name: "demo".into(),
        obstacles: vec![Circle {
            center: [0.8, 0.45],
            radius: 0.25,
        }],
        activation_margin: 0.08,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let h = 1e-5;

    // Collision cost through forward kinematics, as a function of theta.
    let collision_of = |theta: &[f64]| {
        let (s, _) = forward_kinematics(theta, 1, &model);
        collision_cost(&s, &env).0[0]
    };
    let theta: Vec<f64> = (0..7).map(|_| rng.random_range(-0.6..0.6)).collect();
    let (spheres, _) = forward_kinematics(&theta, 1, &model);
    let (_, _, grad_spheres) = collision_cost(&spheres, &env);
    let analytic = backward_kinematics(&theta, 1, &grad_spheres, &model);
    let fd: Vec<f64> = (0..7)
        .map(|j| {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[j] += h;
            m[j] -= h;
            (collision_of(&p) - collision_of(&m)) / (2.0 * h)
        })
        .collect();
    println!(
        "collision gradient: max relative error {:.2e}",
        max_rel_error(&analytic, &fd)
    );

    // Swept collision over a short trajectory.
    let horizon = 5;
    let traj: Vec<f64> = (0..horizon * 7)
        .map(|i| 0.1 + 0.05 * (i as f64 * 0.31).sin())
        .collect();
    let swept_of = |t: &[f64]| swept_collision_cost(t, horizon, &env, &model, 4).0;
    let (spheres_rows, configs, support) =
        varprec::arm::swept_sphere_rows(&traj, horizon, &model, 4);
    let field = varprec::arm::collision_field(&spheres_rows, &env);
    let (_, grad_rows) = varprec::arm::swept_eval(&field);
    let analytic = varprec::arm::swept_joint_grad(&configs, &grad_rows, &support, &model, horizon);
    let fd: Vec<f64> = (0..traj.len())
        .map(|i| {
            let mut p = traj.clone();
            let mut m = traj.clone();
            p[i] += h;
            m[i] -= h;
            (swept_of(&p) - swept_of(&m)) / (2.0 * h)
        })
        .collect();
    println!(
        "swept gradient:     max relative error {:.2e}",
        max_rel_error(&analytic, &fd)
    );

    // Pose cost directly on the end-effector pose.
    let goal = Pose {
        position: [0.9, 0.4],
        angle: 0.3,
    };
    let pose = Pose {
        position: [1.1, 0.2],
        angle: -0.2,
    };
    let (_, g) = pose_cost(&pose, &goal, 1.0, 1.0);
    let fd_x = (pose_cost(
        &Pose {
            position: [pose.position[0] + h, pose.position[1]],
            ..pose
        },
        &goal,
        1.0,
        1.0,
    )
    .0 - pose_cost(
        &Pose {
            position: [pose.position[0] - h, pose.position[1]],
            ..pose
        },
        &goal,
        1.0,
        1.0,
    )
    .0) / (2.0 * h);
    println!(
        "pose gradient:      max relative error {:.2e}",
        (g[0] - fd_x).abs() / fd_x.abs().max(1.0)
    );

    // Self-collision and bounds on a folded posture.
    let folded = vec![0.0, 2.4, 2.4, -2.4, 2.4, -2.0, 3.1];
    let self_of = |t: &[f64]| {
        let (s, _) = forward_kinematics(t, 1, &model);
        self_collision_cost(&s, &model).0[0]
    };
    let (s, _) = forward_kinematics(&folded, 1, &model);
    let (_, _, sg) = self_collision_cost(&s, &model);
    let analytic = backward_kinematics(&folded, 1, &sg, &model);
    let fd: Vec<f64> = (0..7)
        .map(|j| {
            let mut p = folded.clone();
            let mut m = folded.clone();
            p[j] += h;
            m[j] -= h;
            (self_of(&p) - self_of(&m)) / (2.0 * h)
        })
        .collect();
    println!(
        "self-collision:     max relative error {:.2e}",
        max_rel_error(&analytic, &fd)
    );

    let (_, bg) = bound_cost(&folded, 1, &model);
    let bound_of = |t: &[f64]| bound_cost(t, 1, &model).0[0];
    let fd: Vec<f64> = (0..7)
        .map(|j| {
            let mut p = folded.clone();
            let mut m = folded.clone();
            p[j] += h;
            m[j] -= h;
            (bound_of(&p) - bound_of(&m)) / (2.0 * h)
        })
        .collect();
    println!(
        "bound gradient:     max relative error {:.2e}",
        max_rel_error(&bg, &fd)
    );
}
