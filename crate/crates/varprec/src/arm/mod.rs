//! Planar serial-arm testbed: a sphere-decomposed n-link arm in a 2-D world
//! of circular obstacles.
//!
//! The arm stands in for the robot-model kernels of a GPU motion stack at
//! desk scale. Kinematics and every cost function are pure `f64` math with
//! analytic gradients; the five quantization tensor slots are materialized
//! by the pipeline layer on top of these functions.
//!
//! Geometry conventions: the base sits at the origin, joint angles are
//! cumulative (joint `i` rotates everything distal to it), angles are in
//! radians and distances in meters.

mod costs;
mod kinematics;

pub use costs::{
    bound_cost, collision_cost, collision_eval, collision_field, pose_cost, self_collision_cost,
    self_collision_eval, self_collision_vec, sweep_count, swept_collision_cost, swept_eval,
    swept_joint_grad, swept_sphere_rows, SweepSupport,
};
pub use kinematics::{backward_kinematics, ee_pose_backward, forward_kinematics};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArmError {
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
}

/// An end-effector pose: tip position plus accumulated orientation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 2],
    pub angle: f64,
}

/// A circular obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// The planar arm: link lengths, joint limits, sphere decomposition and the
/// retract posture used as an intermediate seeding waypoint.
///
/// Collision geometry is `spheres_per_link` circles of radius
/// `sphere_radius` per link, centered at fractions `(k + 0.5) / spheres_per_link`
/// along the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub link_lengths: Vec<f64>,
    /// Per-joint `(lo, hi)` bounds in radians.
    pub joint_limits: Vec<(f64, f64)>,
    pub spheres_per_link: usize,
    pub sphere_radius: f64,
    pub retract_config: Vec<f64>,
}

impl ArmModel {
    /// The default testbed: seven 0.3 m links, three spheres each, limits
    /// ±2.9 rad, tucked retract posture.
    pub fn default_7link() -> Self {
        ArmModel {
            link_lengths: vec![0.3; 7],
            joint_limits: vec![(-2.9, 2.9); 7],
            spheres_per_link: 3,
            sphere_radius: 0.05,
            retract_config: vec![1.57, 0.85, 0.85, 0.85, 0.85, 0.85, 0.85],
        }
    }

    pub fn n_joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn n_spheres(&self) -> usize {
        self.link_lengths.len() * self.spheres_per_link
    }

    /// Total reach with the arm fully extended.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Fraction along the link at which sphere `k` of a link sits.
    pub fn sphere_fraction(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.spheres_per_link as f64
    }

    pub fn within_limits(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(&self.joint_limits)
            .all(|(&t, &(lo, hi))| t >= lo && t <= hi)
    }

    pub fn validate(&self) -> Result<(), ArmError> {
        let n = self.link_lengths.len();
        if n == 0 {
            return Err(ArmError::InvalidModel("no links".into()));
        }
        if self.joint_limits.len() != n || self.retract_config.len() != n {
            return Err(ArmError::InvalidModel(format!(
                "joint_limits and retract_config must have {n} entries"
            )));
        }
        if self.link_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(ArmError::InvalidModel("link lengths must be > 0".into()));
        }
        if self.joint_limits.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(ArmError::InvalidModel("joint limits need lo < hi".into()));
        }
        if self.spheres_per_link < 1 {
            return Err(ArmError::InvalidModel(
                "spheres_per_link must be >= 1".into(),
            ));
        }
        if !(self.sphere_radius > 0.0) {
            return Err(ArmError::InvalidModel("sphere_radius must be > 0".into()));
        }
        if !self.within_limits(&self.retract_config) {
            return Err(ArmError::InvalidModel(
                "retract_config outside joint limits".into(),
            ));
        }
        Ok(())
    }

    /// Sphere pairs on non-adjacent links (indices differing by >= 2),
    /// in lexicographic global-index order. This is the `out_vec` layout.
    pub fn self_collision_pairs(&self) -> Vec<(usize, usize)> {
        let s = self.spheres_per_link;
        let n = self.link_lengths.len();
        let mut pairs = Vec::new();
        for li in 0..n {
            for lj in (li + 2)..n {
                for a in 0..s {
                    for b in 0..s {
                        pairs.push((li * s + a, lj * s + b));
                    }
                }
            }
        }
        pairs
    }
}

/// A named world of circular obstacles.
///
/// `activation_margin` is the clearance below which the collision cost
/// activates; validation uses zero margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub obstacles: Vec<Circle>,
    pub activation_margin: f64,
}

impl Environment {
    pub fn empty(name: &str, activation_margin: f64) -> Self {
        Environment {
            name: name.into(),
            obstacles: Vec::new(),
            activation_margin,
        }
    }

    pub fn validate(&self) -> Result<(), ArmError> {
        if self.obstacles.iter().any(|c| !(c.radius > 0.0)) {
            return Err(ArmError::InvalidEnvironment(format!(
                "{}: obstacle radii must be > 0",
                self.name
            )));
        }
        if !(self.activation_margin >= 0.0) {
            return Err(ArmError::InvalidEnvironment(format!(
                "{}: activation_margin must be >= 0",
                self.name
            )));
        }
        Ok(())
    }
}

/// One task: a start configuration, a goal pose for the end effector, and
/// the seed that drives every random choice made while solving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub start_config: Vec<f64>,
    pub goal_pose: Pose,
    pub rng_seed: u64,
}

/// Sphere centers and radii for a batch of configurations, flat
/// `[batch][sphere][x, y, radius]`. This is the `out_spheres` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSet {
    pub batch: usize,
    pub n_spheres: usize,
    pub data: Vec<f64>,
}

impl SphereSet {
    pub fn zeros(batch: usize, n_spheres: usize) -> Self {
        SphereSet {
            batch,
            n_spheres,
            data: vec![0.0; batch * n_spheres * 3],
        }
    }

    #[inline]
    pub fn sphere(&self, b: usize, s: usize) -> (f64, f64, f64) {
        let i = (b * self.n_spheres + s) * 3;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }
}

/// Cost gradient with respect to sphere centers, flat `[batch][sphere][x, y]`.
/// This is the `grad_out_spheres` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrad {
    pub batch: usize,
    pub n_spheres: usize,
    pub data: Vec<f64>,
}

impl SphereGrad {
    pub fn zeros(batch: usize, n_spheres: usize) -> Self {
        SphereGrad {
            batch,
            n_spheres,
            data: vec![0.0; batch * n_spheres * 2],
        }
    }

    #[inline]
    pub fn add(&mut self, b: usize, s: usize, gx: f64, gy: f64) {
        let i = (b * self.n_spheres + s) * 2;
        self.data[i] += gx;
        self.data[i + 1] += gy;
    }

    pub fn accumulate(&mut self, other: &SphereGrad) {
        self.scaled_accumulate(other, 1.0);
    }

    pub fn scaled_accumulate(&mut self, other: &SphereGrad, k: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }
}

/// Pairwise penetration terms feeding the self-collision cost, flat
/// `[batch][pair]`. This is the `out_vec` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfCollisionVec {
    pub batch: usize,
    pub n_pairs: usize,
    pub data: Vec<f64>,
}

/// Per-sphere penetration depth and contact direction, flat
/// `[row][sphere][depth, dir_x, dir_y]`.
///
/// `rows` is the batch for the IK-side field (`closest_pt`) and the number
/// of sweep points for the trajectory-side field (`closest_pt_swept`). The
/// direction points from the sphere toward the obstacle (the direction of
/// decreasing clearance); the gradient of the cost with respect to the
/// sphere center is `2 * depth * dir`. It has unit norm when depth > 0 and
/// is zero otherwise, with a fixed `(+1, 0)` fallback when the sphere center
/// coincides with an obstacle center.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosestPointField {
    pub rows: usize,
    pub n_spheres: usize,
    pub data: Vec<f64>,
}

impl ClosestPointField {
    pub fn zeros(rows: usize, n_spheres: usize) -> Self {
        ClosestPointField {
            rows,
            n_spheres,
            data: vec![0.0; rows * n_spheres * 3],
        }
    }

    #[inline]
    pub fn entry(&self, row: usize, s: usize) -> (f64, f64, f64) {
        let i = (row * self.n_spheres + s) * 3;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }
}

/// Fraction of exact zeros in a tensor; empty tensors report 1.0.
pub fn fraction_zero(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let zeros = values.iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / values.len() as f64
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}
