//! Forward and backward kinematics for the planar arm.

use super::{ArmModel, Pose, SphereGrad, SphereSet};

/// Places collision spheres and end-effector poses for a batch of joint
/// configurations, flat `theta[batch * n_joints]`.
///
/// Joint angles accumulate: link `i` points along `phi_i = theta_0 + ... +
/// theta_i`. Spheres sit at the model's fixed fractions along each link.
pub fn forward_kinematics(
    thetas: &[f64],
    batch: usize,
    model: &ArmModel,
) -> (SphereSet, Vec<Pose>) {
    let n = model.n_joints();
    assert_eq!(thetas.len(), batch * n, "theta batch shape mismatch");
    let mut spheres = SphereSet::zeros(batch, model.n_spheres());
    let mut poses = Vec::with_capacity(batch);
    for b in 0..batch {
        let theta = &thetas[b * n..(b + 1) * n];
        let pose = fk_single(theta, model, &mut spheres, b);
        poses.push(pose);
    }
    (spheres, poses)
}

fn fk_single(theta: &[f64], model: &ArmModel, spheres: &mut SphereSet, b: usize) -> Pose {
    let n = model.n_joints();
    let s = model.spheres_per_link;
    let mut phi = 0.0;
    let (mut px, mut py) = (0.0, 0.0);
    for i in 0..n {
        phi += theta[i];
        let (sin, cos) = phi.sin_cos();
        let len = model.link_lengths[i];
        for k in 0..s {
            let t = model.sphere_fraction(k) * len;
            let idx = (b * spheres.n_spheres + i * s + k) * 3;
            spheres.data[idx] = px + t * cos;
            spheres.data[idx + 1] = py + t * sin;
            spheres.data[idx + 2] = model.sphere_radius;
        }
        px += len * cos;
        py += len * sin;
    }
    Pose {
        position: [px, py],
        angle: phi,
    }
}

/// Pulls a sphere-center gradient back to joint space (Jacobian transpose),
/// returning a flat `[batch][joint]` gradient.
pub fn backward_kinematics(
    thetas: &[f64],
    batch: usize,
    grad_spheres: &SphereGrad,
    model: &ArmModel,
) -> Vec<f64> {
    let n = model.n_joints();
    assert_eq!(thetas.len(), batch * n);
    assert_eq!(grad_spheres.batch, batch);
    assert_eq!(grad_spheres.n_spheres, model.n_spheres());
    let mut grad = vec![0.0; batch * n];
    let mut w = vec![(0.0, 0.0); n];
    for b in 0..batch {
        let theta = &thetas[b * n..(b + 1) * n];
        link_tangents(theta, model, &mut w);
        backward_single(model, grad_spheres, b, &w, &mut grad[b * n..(b + 1) * n]);
    }
    grad
}

/// Per-link tangent vectors `w_i = L_i * (-sin phi_i, cos phi_i)`: the
/// derivative of link i's far endpoint offset with respect to any joint at
/// or before i.
fn link_tangents(theta: &[f64], model: &ArmModel, w: &mut [(f64, f64)]) {
    let mut phi = 0.0;
    for i in 0..theta.len() {
        phi += theta[i];
        let (sin, cos) = phi.sin_cos();
        let len = model.link_lengths[i];
        w[i] = (-len * sin, len * cos);
    }
}

fn backward_single(
    model: &ArmModel,
    grad_spheres: &SphereGrad,
    b: usize,
    w: &[(f64, f64)],
    out: &mut [f64],
) {
    let n = model.n_joints();
    let s = model.spheres_per_link;
    for i in 0..n {
        for k in 0..s {
            let gi = (b * grad_spheres.n_spheres + i * s + k) * 2;
            let (gx, gy) = (grad_spheres.data[gi], grad_spheres.data[gi + 1]);
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let t = model.sphere_fraction(k);
            // d(center)/d(theta_j) = sum_{l=j..i-1} w_l + t * w_i for j <= i
            let mut acc = (t * w[i].0, t * w[i].1);
            let mut j = i;
            loop {
                out[j] += gx * acc.0 + gy * acc.1;
                if j == 0 {
                    break;
                }
                j -= 1;
                acc.0 += w[j].0;
                acc.1 += w[j].1;
            }
        }
    }
}

/// Pulls an end-effector pose gradient `(d/dx, d/dy, d/dangle)` back to
/// joint space, accumulating into `out[n_joints]`.
pub fn ee_pose_backward(theta: &[f64], grad_pose: [f64; 3], model: &ArmModel, out: &mut [f64]) {
    let n = model.n_joints();
    let mut w = vec![(0.0, 0.0); n];
    link_tangents(theta, model, &mut w);
    let mut acc = (0.0, 0.0);
    for j in (0..n).rev() {
        acc.0 += w[j].0;
        acc.1 += w[j].1;
        out[j] += grad_pose[0] * acc.0 + grad_pose[1] * acc.1 + grad_pose[2];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    fn two_link() -> ArmModel {
        ArmModel {
            link_lengths: vec![1.0, 1.0],
            joint_limits: vec![(-3.0, 3.0); 2],
            spheres_per_link: 1,
            sphere_radius: 0.05,
            retract_config: vec![0.0, 0.0],
        }
    }

    #[test]
    fn straight_arm_tip() {
        let (_, poses) = forward_kinematics(&[0.0, 0.0], 1, &two_link());
        assert!((poses[0].position[0] - 2.0).abs() < 1e-12);
        assert!(poses[0].position[1].abs() < 1e-12);
        assert!(poses[0].angle.abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_tip() {
        let (_, poses) = forward_kinematics(&[FRAC_PI_2, 0.0], 1, &two_link());
        assert!(poses[0].position[0].abs() < 1e-12);
        assert!((poses[0].position[1] - 2.0).abs() < 1e-12);
        assert!((poses[0].angle - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn three_link_cumulative_angles() {
        let model = ArmModel {
            link_lengths: vec![1.0; 3],
            joint_limits: vec![(-3.0, 3.0); 3],
            spheres_per_link: 1,
            sphere_radius: 0.05,
            retract_config: vec![0.0; 3],
        };
        let t = FRAC_PI_6;
        let (_, poses) = forward_kinematics(&[t, t, t], 1, &model);
        // Hand sums: cos(30)+cos(60)+cos(90), sin(30)+sin(60)+sin(90)
        let ex = (3.0f64).sqrt() / 2.0 + 0.5 + 0.0;
        let ey = 0.5 + (3.0f64).sqrt() / 2.0 + 1.0;
        assert!((poses[0].position[0] - ex).abs() < 1e-12);
        assert!((poses[0].position[1] - ey).abs() < 1e-12);
        assert!((poses[0].angle - 3.0 * t).abs() < 1e-12);
    }

    #[test]
    fn base_rotation_equivariance() {
        // Rotating theta_0 by phi rotates every sphere about the base.
        let model = ArmModel::default_7link();
        let theta = [0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.3];
        let phi = 0.7;
        let mut rotated = theta;
        rotated[0] += phi;
        let (s0, _) = forward_kinematics(&theta, 1, &model);
        let (s1, _) = forward_kinematics(&rotated, 1, &model);
        let (c, s) = (phi.cos(), phi.sin());
        for i in 0..model.n_spheres() {
            let (x, y, _) = s0.sphere(0, i);
            let (rx, ry, _) = s1.sphere(0, i);
            assert!((rx - (c * x - s * y)).abs() < 1e-12);
            assert!((ry - (s * x + c * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_grad_gives_zero_joint_grad() {
        let model = ArmModel::default_7link();
        let theta = vec![0.1; 7];
        let g = SphereGrad::zeros(1, model.n_spheres());
        let jg = backward_kinematics(&theta, 1, &g, &model);
        assert!(jg.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_joint_single_sphere_analytic() {
        // One link, one sphere at fraction 0.5: c = 0.5*L*(cos t, sin t),
        // dc/dt = 0.5*L*(-sin t, cos t).
        let model = ArmModel {
            link_lengths: vec![2.0],
            joint_limits: vec![(-3.0, 3.0)],
            spheres_per_link: 1,
            sphere_radius: 0.05,
            retract_config: vec![0.0],
        };
        let t = 0.8;
        let mut g = SphereGrad::zeros(1, 1);
        g.add(0, 0, 1.5, -0.7);
        let jg = backward_kinematics(&[t], 1, &g, &model);
        let expect = 1.5 * (-t.sin()) + (-0.7) * t.cos();
        assert!((jg[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let model = ArmModel::default_7link();
        let theta: Vec<f64> = (0..7).map(|i| 0.3 - 0.11 * i as f64).collect();
        // Arbitrary fixed sphere gradient.
        let mut g = SphereGrad::zeros(1, model.n_spheres());
        for i in 0..model.n_spheres() {
            g.add(0, i, (i as f64 * 0.37).sin(), (i as f64 * 0.81).cos());
        }
        let jg = backward_kinematics(&theta, 1, &g, &model);
        // Scalar function f(theta) = sum_s g_s . c_s(theta)
        let f = |th: &[f64]| {
            let (sp, _) = forward_kinematics(th, 1, &model);
            let mut acc = 0.0;
            for i in 0..model.n_spheres() {
                let (x, y, _) = sp.sphere(0, i);
                let gi = i * 2;
                acc += g.data[gi] * x + g.data[gi + 1] * y;
            }
            acc
        };
        let h = 1e-6;
        for j in 0..7 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (f(&tp) - f(&tm)) / (2.0 * h);
            assert!(
                (jg[j] - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                "joint {j}: analytic {} vs fd {}",
                jg[j],
                fd
            );
        }
    }

    #[test]
    fn ee_backward_matches_finite_differences() {
        let model = ArmModel::default_7link();
        let theta: Vec<f64> = (0..7).map(|i| -0.2 + 0.13 * i as f64).collect();
        let gp = [0.4, -1.1, 0.6];
        let mut jg = vec![0.0; 7];
        ee_pose_backward(&theta, gp, &model, &mut jg);
        let f = |th: &[f64]| {
            let (_, poses) = forward_kinematics(th, 1, &model);
            gp[0] * poses[0].position[0] + gp[1] * poses[0].position[1] + gp[2] * poses[0].angle
        };
        let h = 1e-6;
        for j in 0..7 {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[j] += h;
            tm[j] -= h;
            let fd = (f(&tp) - f(&tm)) / (2.0 * h);
            assert!((jg[j] - fd).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }
}
