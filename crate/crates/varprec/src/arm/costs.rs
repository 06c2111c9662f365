//! Collision, self-collision, pose and bound costs with analytic gradients.
//!
//! Each collision-style cost is split into a producer (the intermediate
//! tensor: penetration field or pair vector) and a consumer that turns the
//! intermediate into cost and gradients. The pipeline layer quantizes the
//! intermediate between the two; the one-shot functions here compose both
//! halves without any hook.

use super::kinematics::{backward_kinematics, forward_kinematics};
use super::{
    wrap_angle, ArmModel, ClosestPointField, Environment, Pose, SelfCollisionVec, SphereGrad,
    SphereSet,
};

/// Builds the penetration field for a batch of sphere sets.
///
/// Per sphere: clearance to the nearest obstacle surface (ties to the lowest
/// obstacle index) minus the sphere radius; the field stores
/// `max(0, margin - clearance)` and the unit direction of decreasing
/// clearance, `(+1, 0)` when the centers coincide.
pub fn collision_field(spheres: &SphereSet, env: &Environment) -> ClosestPointField {
    let mut field = ClosestPointField::zeros(spheres.batch, spheres.n_spheres);
    if env.obstacles.is_empty() {
        return field;
    }
    for b in 0..spheres.batch {
        for s in 0..spheres.n_spheres {
            let (x, y, r) = spheres.sphere(b, s);
            let mut best = f64::INFINITY;
            let mut best_dir = (1.0, 0.0);
            for obs in &env.obstacles {
                let dx = obs.center[0] - x;
                let dy = obs.center[1] - y;
                let dist = (dx * dx + dy * dy).sqrt();
                let surface = dist - obs.radius;
                if surface < best {
                    best = surface;
                    best_dir = if dist > 0.0 {
                        (dx / dist, dy / dist)
                    } else {
                        (1.0, 0.0)
                    };
                }
            }
            let depth = (env.activation_margin - (best - r)).max(0.0);
            if depth > 0.0 {
                let i = (b * spheres.n_spheres + s) * 3;
                field.data[i] = depth;
                field.data[i + 1] = best_dir.0;
                field.data[i + 2] = best_dir.1;
            }
        }
    }
    field
}

/// Sums the field into per-item costs and sphere-center gradients:
/// `cost = sum(depth^2)`, `grad = 2 * depth * dir`.
pub fn collision_eval(field: &ClosestPointField) -> (Vec<f64>, SphereGrad) {
    let mut costs = vec![0.0; field.rows];
    let mut grad = SphereGrad::zeros(field.rows, field.n_spheres);
    for b in 0..field.rows {
        for s in 0..field.n_spheres {
            let (depth, dx, dy) = field.entry(b, s);
            if depth > 0.0 {
                costs[b] += depth * depth;
                grad.add(b, s, 2.0 * depth * dx, 2.0 * depth * dy);
            }
        }
    }
    (costs, grad)
}

/// One-shot environment collision cost (no quantization hooks).
pub fn collision_cost(
    spheres: &SphereSet,
    env: &Environment,
) -> (Vec<f64>, ClosestPointField, SphereGrad) {
    let field = collision_field(spheres, env);
    let (costs, grad) = collision_eval(&field);
    (costs, field, grad)
}

/// Builds the pairwise penetration vector over the model's non-adjacent
/// sphere pairs: `max(0, r_a + r_b + margin - distance)` per pair. Entries
/// are zero for pairs separated beyond the margin.
pub fn self_collision_vec(
    spheres: &SphereSet,
    pairs: &[(usize, usize)],
    margin: f64,
) -> SelfCollisionVec {
    let mut data = vec![0.0; spheres.batch * pairs.len()];
    for b in 0..spheres.batch {
        for (p, &(ia, ib)) in pairs.iter().enumerate() {
            let (ax, ay, ar) = spheres.sphere(b, ia);
            let (bx, by, br) = spheres.sphere(b, ib);
            let dist = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
            let pen = (ar + br + margin - dist).max(0.0);
            if pen > 0.0 {
                data[b * pairs.len() + p] = pen;
            }
        }
    }
    SelfCollisionVec {
        batch: spheres.batch,
        n_pairs: pairs.len(),
        data,
    }
}

/// Turns a (possibly quantized) penetration vector into per-item costs and
/// sphere gradients. Pair directions come from the sphere geometry; the
/// descent direction pushes each active pair apart along its center line,
/// with a `(+1, 0)` axis fallback for coincident centers.
pub fn self_collision_eval(
    vec: &SelfCollisionVec,
    spheres: &SphereSet,
    pairs: &[(usize, usize)],
) -> (Vec<f64>, SphereGrad) {
    assert_eq!(vec.n_pairs, pairs.len());
    let mut costs = vec![0.0; vec.batch];
    let mut grad = SphereGrad::zeros(vec.batch, spheres.n_spheres);
    for b in 0..vec.batch {
        for (p, &(ia, ib)) in pairs.iter().enumerate() {
            let pen = vec.data[b * vec.n_pairs + p];
            if pen <= 0.0 {
                continue;
            }
            costs[b] += pen * pen;
            let (ax, ay, _) = spheres.sphere(b, ia);
            let (bx, by, _) = spheres.sphere(b, ib);
            let (dx, dy) = (ax - bx, ay - by);
            let dist = (dx * dx + dy * dy).sqrt();
            let (ux, uy) = if dist > 0.0 {
                (dx / dist, dy / dist)
            } else {
                (1.0, 0.0)
            };
            // cost rises as the pair closes: grad_a = -2*pen*u, grad_b = +2*pen*u
            grad.add(b, ia, -2.0 * pen * ux, -2.0 * pen * uy);
            grad.add(b, ib, 2.0 * pen * ux, 2.0 * pen * uy);
        }
    }
    (costs, grad)
}

/// One-shot self-collision cost at zero margin (no quantization hooks):
/// entries activate only on physical sphere overlap.
pub fn self_collision_cost(
    spheres: &SphereSet,
    model: &ArmModel,
) -> (Vec<f64>, SelfCollisionVec, SphereGrad) {
    let pairs = model.self_collision_pairs();
    let vec = self_collision_vec(spheres, &pairs, 0.0);
    let (costs, grad) = self_collision_eval(&vec, spheres, &pairs);
    (costs, vec, grad)
}

/// Pose error cost `w_pos * |dp|^2 + w_ang * wrap(da)^2` with its gradient
/// with respect to the end-effector pose.
pub fn pose_cost(pose: &Pose, goal: &Pose, w_pos: f64, w_ang: f64) -> (f64, [f64; 3]) {
    let dx = pose.position[0] - goal.position[0];
    let dy = pose.position[1] - goal.position[1];
    let da = wrap_angle(pose.angle - goal.angle);
    let cost = w_pos * (dx * dx + dy * dy) + w_ang * da * da;
    (cost, [2.0 * w_pos * dx, 2.0 * w_pos * dy, 2.0 * w_ang * da])
}

/// Quadratic hinge outside the joint limits, summed per item; returns
/// per-item costs and the flat `[batch][joint]` gradient.
pub fn bound_cost(thetas: &[f64], batch: usize, model: &ArmModel) -> (Vec<f64>, Vec<f64>) {
    let n = model.n_joints();
    let mut costs = vec![0.0; batch];
    let mut grad = vec![0.0; batch * n];
    for b in 0..batch {
        for j in 0..n {
            let t = thetas[b * n + j];
            let (lo, hi) = model.joint_limits[j];
            let over = if t > hi {
                t - hi
            } else if t < lo {
                t - lo
            } else {
                continue;
            };
            costs[b] += over * over;
            grad[b * n + j] = 2.0 * over;
        }
    }
    (costs, grad)
}

/// How trajectory rows map onto waypoints: `(lo, hi, alpha)` per sweep row,
/// with waypoint rows encoded as `(t, t, 0)`.
#[derive(Debug, Clone)]
pub struct SweepSupport {
    pub rows: Vec<(usize, usize, f64)>,
}

/// Number of sweep evaluation points: every waypoint plus `substeps - 1`
/// interior interpolations per segment.
pub fn sweep_count(horizon: usize, substeps: usize) -> usize {
    assert!(substeps >= 1);
    horizon + (horizon - 1) * (substeps - 1)
}

/// Interpolates the trajectory in joint space and runs forward kinematics at
/// every sweep row. Returns the sphere rows, the interpolated configurations
/// (flat `[row][joint]`) and the waypoint support of each row.
pub fn swept_sphere_rows(
    traj: &[f64],
    horizon: usize,
    model: &ArmModel,
    substeps: usize,
) -> (SphereSet, Vec<f64>, SweepSupport) {
    let n = model.n_joints();
    assert_eq!(traj.len(), horizon * n);
    assert!(horizon >= 2);
    let count = sweep_count(horizon, substeps);
    let mut configs = Vec::with_capacity(count * n);
    let mut rows = Vec::with_capacity(count);
    for t in 0..horizon - 1 {
        let wp = &traj[t * n..(t + 1) * n];
        let next = &traj[(t + 1) * n..(t + 2) * n];
        configs.extend_from_slice(wp);
        rows.push((t, t, 0.0));
        for j in 1..substeps {
            let alpha = j as f64 / substeps as f64;
            for k in 0..n {
                configs.push((1.0 - alpha) * wp[k] + alpha * next[k]);
            }
            rows.push((t, t + 1, alpha));
        }
    }
    configs.extend_from_slice(&traj[(horizon - 1) * n..]);
    rows.push((horizon - 1, horizon - 1, 0.0));
    let (spheres, _) = forward_kinematics(&configs, count, model);
    (spheres, configs, SweepSupport { rows })
}

/// Consumes a (possibly quantized) swept field: total cost over all rows and
/// the per-row sphere gradients (the swept `grad_out_spheres` tensor).
pub fn swept_eval(field: &ClosestPointField) -> (f64, SphereGrad) {
    let (costs, grad) = collision_eval(field);
    (costs.iter().sum(), grad)
}

/// Pulls per-row sphere gradients back to the waypoints: backward kinematics
/// at each interpolated configuration, then joint-space distribution to the
/// bracketing waypoints by interpolation weight. Returns the flat
/// `[waypoint][joint]` gradient.
pub fn swept_joint_grad(
    configs: &[f64],
    grad_rows: &SphereGrad,
    support: &SweepSupport,
    model: &ArmModel,
    horizon: usize,
) -> Vec<f64> {
    let n = model.n_joints();
    let rows = support.rows.len();
    assert_eq!(configs.len(), rows * n);
    assert_eq!(grad_rows.batch, rows);
    let row_joint = backward_kinematics(configs, rows, grad_rows, model);
    let mut out = vec![0.0; horizon * n];
    for (r, &(lo, hi, alpha)) in support.rows.iter().enumerate() {
        let rj = &row_joint[r * n..(r + 1) * n];
        for k in 0..n {
            out[lo * n + k] += (1.0 - alpha) * rj[k];
            if hi != lo {
                out[hi * n + k] += alpha * rj[k];
            }
        }
    }
    out
}

/// One-shot swept collision cost over a trajectory (no quantization hooks):
/// total cost, the swept penetration field and the per-row sphere gradients.
pub fn swept_collision_cost(
    traj: &[f64],
    horizon: usize,
    env: &Environment,
    model: &ArmModel,
    substeps: usize,
) -> (f64, ClosestPointField, SphereGrad) {
    let (spheres, _, _) = swept_sphere_rows(traj, horizon, model, substeps);
    let field = collision_field(&spheres, env);
    let (cost, grad) = swept_eval(&field);
    (cost, field, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::Circle;

    fn env_one(center: [f64; 2], radius: f64, margin: f64) -> Environment {
        Environment {
            name: "one".into(),
            obstacles: vec![Circle { center, radius }],
            activation_margin: margin,
        }
    }

    fn single_sphere(x: f64, y: f64, r: f64) -> SphereSet {
        SphereSet {
            batch: 1,
            n_spheres: 1,
            data: vec![x, y, r],
        }
    }

    #[test]
    fn far_sphere_costs_nothing() {
        let env = env_one([10.0, 10.0], 0.5, 0.1);
        let spheres = single_sphere(0.0, 0.0, 0.05);
        let (costs, field, grad) = collision_cost(&spheres, &env);
        assert_eq!(costs[0], 0.0);
        assert!(field.data.iter().all(|&v| v == 0.0));
        assert!(grad.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coincident_center_uses_fallback_direction() {
        let (or, sr, margin) = (0.4, 0.05, 0.1);
        let env = env_one([1.0, 2.0], or, margin);
        let spheres = single_sphere(1.0, 2.0, sr);
        let (costs, field, _) = collision_cost(&spheres, &env);
        let (depth, dx, dy) = field.entry(0, 0);
        assert!((depth - (margin + or + sr)).abs() < 1e-12);
        assert_eq!((dx, dy), (1.0, 0.0));
        assert!((costs[0] - depth * depth).abs() < 1e-12);
    }

    #[test]
    fn nearest_obstacle_ties_break_low_index() {
        let env = Environment {
            name: "tie".into(),
            obstacles: vec![
                Circle {
                    center: [1.0, 0.0],
                    radius: 0.2,
                },
                Circle {
                    center: [-1.0, 0.0],
                    radius: 0.2,
                },
            ],
            activation_margin: 1.0,
        };
        let spheres = single_sphere(0.0, 0.0, 0.05);
        let field = collision_field(&spheres, &env);
        let (_, dx, _) = field.entry(0, 0);
        // Equidistant: the first obstacle (at +x) wins, direction toward it.
        assert!(dx > 0.0);
    }

    #[test]
    fn collision_gradient_matches_fd() {
        let env = env_one([0.6, 0.1], 0.3, 0.1);
        let cost_at = |x: f64, y: f64| {
            let (c, _, _) = collision_cost(&single_sphere(x, y, 0.05), &env);
            c[0]
        };
        let (x, y) = (0.25, 0.05); // inside the activation band
        let (_, _, grad) = collision_cost(&single_sphere(x, y, 0.05), &env);
        let h = 1e-6;
        let fdx = (cost_at(x + h, y) - cost_at(x - h, y)) / (2.0 * h);
        let fdy = (cost_at(x, y + h) - cost_at(x, y - h)) / (2.0 * h);
        assert!(
            (grad.data[0] - fdx).abs() < 1e-6,
            "{} vs {fdx}",
            grad.data[0]
        );
        assert!(
            (grad.data[1] - fdy).abs() < 1e-6,
            "{} vs {fdy}",
            grad.data[1]
        );
    }

    #[test]
    fn extended_arm_has_no_self_collision() {
        let model = ArmModel::default_7link();
        let (spheres, _) = forward_kinematics(&vec![0.0; 7], 1, &model);
        let (costs, vec, grad) = self_collision_cost(&spheres, &model);
        assert_eq!(costs[0], 0.0);
        assert!(vec.data.iter().all(|&v| v == 0.0));
        assert!(grad.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn folded_arm_penetration_by_hand() {
        // Three unit links, one mid-link sphere each. theta = [0, pi, pi-d]
        // puts sphere 2 at 0.5*(cos(-d), sin(-d)); distance to sphere 0 at
        // (0.5, 0) is 2*0.5*sin(d/2) = sin(d/2)*... = 0.5*sqrt(2-2cos d).
        let model = ArmModel {
            link_lengths: vec![1.0; 3],
            joint_limits: vec![(-7.0, 7.0); 3],
            spheres_per_link: 1,
            sphere_radius: 0.06,
            retract_config: vec![0.0; 3],
        };
        let d = 0.2;
        let theta = [0.0, std::f64::consts::PI, std::f64::consts::PI - d];
        let (spheres, _) = forward_kinematics(&theta, 1, &model);
        let (costs, vec, _) = self_collision_cost(&spheres, &model);
        let dist = 0.5 * (2.0 - 2.0 * d.cos()).sqrt();
        let pen = 0.12 - dist;
        assert!(pen > 0.0);
        // Only the (link0, link2) pair exists.
        assert_eq!(vec.n_pairs, 1);
        assert!((vec.data[0] - pen).abs() < 1e-12);
        assert!((costs[0] - pen * pen).abs() < 1e-12);
    }

    #[test]
    fn field_directions_are_unit_or_zero() {
        let model = ArmModel::default_7link();
        let env = Environment {
            name: "two".into(),
            obstacles: vec![
                Circle {
                    center: [0.6, 0.2],
                    radius: 0.3,
                },
                Circle {
                    center: [-0.4, -0.5],
                    radius: 0.2,
                },
            ],
            activation_margin: 0.2,
        };
        let thetas: Vec<f64> = (0..3 * 7).map(|i| (i as f64 * 0.37).sin()).collect();
        let (spheres, _) = forward_kinematics(&thetas, 3, &model);
        let field = collision_field(&spheres, &env);
        let mut active = 0;
        for row in 0..field.rows {
            for s in 0..field.n_spheres {
                let (depth, dx, dy) = field.entry(row, s);
                let norm = (dx * dx + dy * dy).sqrt();
                if depth > 0.0 {
                    assert!((norm - 1.0).abs() < 1e-12);
                    active += 1;
                } else {
                    assert_eq!(norm, 0.0);
                }
            }
        }
        assert!(active > 0, "construction should activate some spheres");
    }

    #[test]
    fn self_collision_cost_is_sum_of_squared_entries() {
        let model = ArmModel::default_7link();
        // A scrunched batch with several active pairs.
        let thetas: Vec<f64> = (0..2 * 7)
            .map(|i| {
                if i % 7 == 0 {
                    0.0
                } else {
                    1.9 + 0.1 * (i % 3) as f64
                }
            })
            .collect();
        let (spheres, _) = forward_kinematics(&thetas, 2, &model);
        let (costs, vec, _) = self_collision_cost(&spheres, &model);
        assert!(vec.data.iter().all(|&v| v >= 0.0));
        assert!(vec.data.iter().any(|&v| v > 0.0));
        for b in 0..2 {
            let sum: f64 = vec.data[b * vec.n_pairs..(b + 1) * vec.n_pairs]
                .iter()
                .map(|v| v * v)
                .sum();
            assert_eq!(costs[b].to_bits(), sum.to_bits());
        }
    }

    #[test]
    fn coincident_pair_uses_fallback_axis() {
        let model = ArmModel {
            link_lengths: vec![1.0; 3],
            joint_limits: vec![(-7.0, 7.0); 3],
            spheres_per_link: 1,
            sphere_radius: 0.06,
            retract_config: vec![0.0; 3],
        };
        // theta = [0, pi, pi]: link 2 retraces link 0, spheres coincide.
        let theta = [0.0, std::f64::consts::PI, std::f64::consts::PI];
        let (spheres, _) = forward_kinematics(&theta, 1, &model);
        let (_, vec, grad) = self_collision_cost(&spheres, &model);
        assert!((vec.data[0] - 0.12).abs() < 1e-9);
        // Gradient along +x for sphere 0 (negative side) and sphere 2.
        assert!(grad.data[0] < 0.0);
        assert_eq!(grad.data[1].abs(), 0.0);
    }

    #[test]
    fn pose_cost_examples() {
        let goal = Pose {
            position: [1.0, 1.0],
            angle: 0.4,
        };
        let (c, g) = pose_cost(&goal.clone(), &goal, 1.0, 1.0);
        assert_eq!(c, 0.0);
        assert_eq!(g, [0.0, 0.0, 0.0]);

        let pose = Pose {
            position: [1.3, 1.4],
            angle: 0.4,
        };
        let (c, _) = pose_cost(&pose, &goal, 1.0, 1.0);
        assert!((c - 0.25).abs() < 1e-12);

        let spun = Pose {
            position: [1.0, 1.0],
            angle: 0.4 + 2.0 * std::f64::consts::PI,
        };
        let (c, _) = pose_cost(&spun, &goal, 1.0, 1.0);
        assert!(c < 1e-25);
    }

    #[test]
    fn bound_cost_hinges() {
        let model = ArmModel::default_7link();
        let inside = vec![0.5; 7];
        let (c, g) = bound_cost(&inside, 1, &model);
        assert_eq!(c[0], 0.0);
        assert!(g.iter().all(|&v| v == 0.0));

        let mut over = vec![0.0; 7];
        over[3] = 2.9 + 0.1;
        let (c, g) = bound_cost(&over, 1, &model);
        assert!((c[0] - 0.01).abs() < 1e-12);
        assert!((g[3] - 0.2).abs() < 1e-12);

        let mut under = vec![0.0; 7];
        under[0] = -3.0;
        let (c, g) = bound_cost(&under, 1, &model);
        assert!((c[0] - 0.01).abs() < 1e-12);
        assert!((g[0] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn swept_with_one_substep_is_waypoint_sum() {
        let model = ArmModel::default_7link();
        let env = env_one([0.8, 0.5], 0.2, 0.05);
        let horizon = 5;
        let mut traj = Vec::new();
        for t in 0..horizon {
            let a = t as f64 / (horizon - 1) as f64;
            traj.extend((0..7).map(|j| a * 0.2 + 0.05 * j as f64));
        }
        let (swept, _, _) = swept_collision_cost(&traj, horizon, &env, &model, 1);
        let (spheres, _) = forward_kinematics(&traj, horizon, &model);
        let (per_wp, _, _) = collision_cost(&spheres, &env);
        let sum: f64 = per_wp.iter().sum();
        assert!((swept - sum).abs() < 1e-12);
    }

    #[test]
    fn midpoint_collision_needs_substeps() {
        // Single-link arm swinging over an obstacle: endpoints clear, the
        // midpoint configuration sweeps through it.
        let model = ArmModel {
            link_lengths: vec![1.0],
            joint_limits: vec![(-3.0, 3.0)],
            spheres_per_link: 1,
            sphere_radius: 0.05,
            retract_config: vec![0.0],
        };
        // Sphere traces radius 0.5: obstacle sits on the arc at angle 0.
        let env = env_one([0.5, 0.0], 0.08, 0.0);
        let traj = [-0.8, 0.8]; // waypoints clear of the obstacle
        let (c1, _, _) = swept_collision_cost(&traj, 2, &env, &model, 1);
        let (c2, _, _) = swept_collision_cost(&traj, 2, &env, &model, 2);
        assert_eq!(c1, 0.0);
        assert!(c2 > 0.0);
    }

    #[test]
    fn straight_free_trajectory_is_zero() {
        let model = ArmModel::default_7link();
        let env = Environment::empty("void", 0.1);
        let traj: Vec<f64> = (0..4).flat_map(|_| vec![0.1; 7]).collect();
        let (c, _, g) = swept_collision_cost(&traj, 4, &env, &model, 3);
        assert_eq!(c, 0.0);
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn swept_gradient_matches_fd() {
        let model = ArmModel {
            link_lengths: vec![0.6, 0.6],
            joint_limits: vec![(-3.0, 3.0); 2],
            spheres_per_link: 2,
            sphere_radius: 0.08,
            retract_config: vec![0.0; 2],
        };
        let env = env_one([0.7, 0.25], 0.25, 0.1);
        let horizon = 4;
        let substeps = 3;
        let traj = vec![0.0, 0.0, 0.25, 0.1, 0.5, 0.2, 0.75, 0.3];
        let cost_of = |tr: &[f64]| swept_collision_cost(tr, horizon, &env, &model, substeps).0;

        let (spheres, configs, support) = swept_sphere_rows(&traj, horizon, &model, substeps);
        let field = collision_field(&spheres, &env);
        let (_, grad_rows) = swept_eval(&field);
        let jg = swept_joint_grad(&configs, &grad_rows, &support, &model, horizon);

        let h = 1e-6;
        for i in 0..traj.len() {
            let mut tp = traj.clone();
            let mut tm = traj.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (cost_of(&tp) - cost_of(&tm)) / (2.0 * h);
            assert!(
                (jg[i] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "idx {i}: analytic {} vs fd {}",
                jg[i],
                fd
            );
        }
    }
}
