//! End-to-end motion generation with per-tensor quantization hooks.
//!
//! One attempt is IK optimization, trajectory seeding and trajectory
//! optimization; a problem succeeds when any optimized trajectory validates
//! at full precision. Five intermediate tensors pass through
//! quantize-dequantize hooks driven by a [`PrecisionConfig`]:
//!
//! - `out_spheres` — forward-kinematics output, right after every FK call
//! - `closest_pt` / `closest_pt_swept` — collision fields, before cost and
//!   gradient assembly
//! - `out_vec` — self-collision penetrations, before cost aggregation
//! - `grad_out_spheres` — aggregated sphere gradients, right before
//!   backward kinematics
//!
//! The identity format `E8M23` leaves tensors untouched, so the all-`E8M23`
//! baseline reproduces the unhooked pipeline bit for bit.

mod ik;
mod trajopt;
mod validate;

pub use ik::{ik_cost_and_grad, solve_ik, IkSolution};
pub use trajopt::{
    linear_trajectory, optimize_trajectory, seed_trajectories, smoothness_cost, to_cost_and_grad,
    TrajectorySeed,
};
pub use validate::{dense_collision_free, validate_trajectory, Validation, Violation};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{forward_kinematics, ArmModel, Environment, Pose, ProblemInstance};
use crate::fpcodec::FpFormat;
use crate::lbfgs::LbfgsConfig;
use crate::streams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("no IK seed reached the goal tolerance")]
    NoIkSolution,
    #[error("problem generation gave up after {0} rejection samples")]
    ProblemSampling(usize),
}

/// The five hooked tensors, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorSlot {
    OutSpheres,
    GradOutSpheres,
    OutVec,
    ClosestPt,
    ClosestPtSwept,
}

impl TensorSlot {
    pub const ALL: [TensorSlot; 5] = [
        TensorSlot::OutSpheres,
        TensorSlot::GradOutSpheres,
        TensorSlot::OutVec,
        TensorSlot::ClosestPt,
        TensorSlot::ClosestPtSwept,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TensorSlot::OutSpheres => "out_spheres",
            TensorSlot::GradOutSpheres => "grad_out_spheres",
            TensorSlot::OutVec => "out_vec",
            TensorSlot::ClosestPt => "closest_pt",
            TensorSlot::ClosestPtSwept => "closest_pt_swept",
        }
    }

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|s| s == self).unwrap()
    }
}

impl std::fmt::Display for TensorSlot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One format per tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrecisionConfig {
    pub out_spheres: FpFormat,
    pub grad_out_spheres: FpFormat,
    pub out_vec: FpFormat,
    pub closest_pt: FpFormat,
    pub closest_pt_swept: FpFormat,
}

impl PrecisionConfig {
    pub fn uniform(fmt: FpFormat) -> Self {
        PrecisionConfig {
            out_spheres: fmt,
            grad_out_spheres: fmt,
            out_vec: fmt,
            closest_pt: fmt,
            closest_pt_swept: fmt,
        }
    }

    /// The all-`E8M23` baseline configuration.
    pub fn full_precision() -> Self {
        Self::uniform(FpFormat::new(8, 23).unwrap())
    }

    pub fn get(&self, slot: TensorSlot) -> FpFormat {
        match slot {
            TensorSlot::OutSpheres => self.out_spheres,
            TensorSlot::GradOutSpheres => self.grad_out_spheres,
            TensorSlot::OutVec => self.out_vec,
            TensorSlot::ClosestPt => self.closest_pt,
            TensorSlot::ClosestPtSwept => self.closest_pt_swept,
        }
    }

    pub fn set(&mut self, slot: TensorSlot, fmt: FpFormat) {
        match slot {
            TensorSlot::OutSpheres => self.out_spheres = fmt,
            TensorSlot::GradOutSpheres => self.grad_out_spheres = fmt,
            TensorSlot::OutVec => self.out_vec = fmt,
            TensorSlot::ClosestPt => self.closest_pt = fmt,
            TensorSlot::ClosestPtSwept => self.closest_pt_swept = fmt,
        }
    }

    pub fn formats(&self) -> [FpFormat; 5] {
        [
            self.out_spheres,
            self.grad_out_spheres,
            self.out_vec,
            self.closest_pt,
            self.closest_pt_swept,
        ]
    }

    /// Sum of the five slot widths; 160 for the baseline.
    pub fn total_bits(&self) -> u32 {
        self.formats().iter().map(|f| f.total_bits()).sum()
    }
}

impl std::fmt::Display for PrecisionConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let fmts = self.formats();
        write!(
            f,
            "({}, {}, {}, {}, {})",
            fmts[0], fmts[1], fmts[2], fmts[3], fmts[4]
        )
    }
}

/// Relative weights of the cost terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub pose_position: f64,
    pub pose_angle: f64,
    pub collision: f64,
    pub self_collision: f64,
    pub bound: f64,
    pub smooth_velocity: f64,
    pub smooth_acceleration: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        // Ratios put the terminal pose far above smoothness and collision
        // near pose; the absolute scale keeps first-iteration steepest
        // descent inside the line-search ladder.
        CostWeights {
            pose_position: 5.0,
            pose_angle: 0.5,
            collision: 3.0,
            self_collision: 3.0,
            bound: 3.0,
            smooth_velocity: 0.005,
            smooth_acceleration: 0.005,
        }
    }
}

/// Knobs of the motion-generation pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub ik_seeds: usize,
    pub to_seeds: usize,
    pub max_attempts: usize,
    /// Waypoints per trajectory.
    pub horizon: usize,
    pub goal_position_tolerance: f64,
    pub goal_angle_tolerance: f64,
    /// Interpolations per segment in the swept collision cost.
    pub interpolation_substeps: usize,
    /// Interpolations per segment in trajectory validation.
    pub validation_substeps: usize,
    pub ik_iterations: usize,
    pub to_iterations: usize,
    pub lbfgs: LbfgsConfig,
    pub weights: CostWeights,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            ik_seeds: 64,
            to_seeds: 4,
            max_attempts: 5,
            horizon: 16,
            goal_position_tolerance: 0.005,
            goal_angle_tolerance: 0.05,
            interpolation_substeps: 8,
            validation_substeps: 8,
            ik_iterations: 100,
            to_iterations: 60,
            lbfgs: LbfgsConfig::default(),
            weights: CostWeights::default(),
        }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.to_seeds < 1 || self.ik_seeds < self.to_seeds {
            return Err("need ik_seeds >= to_seeds >= 1".into());
        }
        if self.max_attempts < 1 {
            return Err("max_attempts must be >= 1".into());
        }
        if self.horizon < 3 {
            return Err("horizon must be >= 3".into());
        }
        if self.interpolation_substeps < 1 || self.validation_substeps < 1 {
            return Err("substeps must be >= 1".into());
        }
        Ok(())
    }
}

/// Zero counts observed at each hook application, pre-quantization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotSparsity {
    pub zeros: [u64; 5],
    pub totals: [u64; 5],
}

impl SlotSparsity {
    pub fn merge(&mut self, other: &SlotSparsity) {
        for i in 0..5 {
            self.zeros[i] += other.zeros[i];
            self.totals[i] += other.totals[i];
        }
    }

    /// Zero fraction for a slot; 1.0 when nothing was recorded.
    pub fn fraction(&self, slot: TensorSlot) -> f64 {
        let i = slot.index();
        if self.totals[i] == 0 {
            1.0
        } else {
            self.zeros[i] as f64 / self.totals[i] as f64
        }
    }
}

/// Quantization hook state for one problem evaluation: the active formats
/// plus sparsity accounting.
#[derive(Debug, Clone)]
pub struct Hooks {
    pub precision: PrecisionConfig,
    pub sparsity: SlotSparsity,
}

impl Hooks {
    pub fn new(precision: PrecisionConfig) -> Self {
        Hooks {
            precision,
            sparsity: SlotSparsity::default(),
        }
    }

    /// Injects the slot's format error into a tensor. The identity format
    /// leaves the data untouched, so the all-`E8M23` configuration is
    /// bit-identical to the unhooked pipeline.
    pub fn apply(&mut self, slot: TensorSlot, data: &mut [f64]) {
        let i = slot.index();
        self.sparsity.totals[i] += data.len() as u64;
        let fmt = self.precision.get(slot);
        if fmt.is_identity() {
            self.sparsity.zeros[i] += data.iter().filter(|&&v| v == 0.0).count() as u64;
            return;
        }
        for v in data.iter_mut() {
            if *v == 0.0 {
                self.sparsity.zeros[i] += 1;
                continue; // zero is representable in every format
            }
            *v = fmt.quantize64(*v);
        }
    }
}

/// Final cost terms of a delivered trajectory, evaluated at full precision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub collision: f64,
    pub self_collision: f64,
    pub smoothness: f64,
    pub bound: f64,
    pub pose: f64,
    pub total: f64,
}

/// Outcome of one motion-generation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessReport {
    pub success: bool,
    pub attempts_used: usize,
    /// Flat `[waypoint][joint]` trajectory, present iff `success`.
    pub final_trajectory: Option<Vec<f64>>,
    pub cost_breakdown: Option<CostBreakdown>,
    /// Wall-clock seconds; excluded from serialized artifacts so that runs
    /// replay byte-identically (timing lives in sidecar metadata).
    #[serde(skip)]
    pub wall_time: f64,
}

/// Runs the full pipeline for one problem: IK, seeding, trajectory
/// optimization and validation, retrying with fresh seed streams up to
/// `max_attempts`.
pub fn generate_motion(
    problem: &ProblemInstance,
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
    precision: &PrecisionConfig,
) -> (SuccessReport, SlotSparsity) {
    let start = std::time::Instant::now();
    let mut hooks = Hooks::new(*precision);
    let mut report = SuccessReport {
        success: false,
        attempts_used: settings.max_attempts,
        final_trajectory: None,
        cost_breakdown: None,
        wall_time: 0.0,
    };

    'attempts: for attempt in 0..settings.max_attempts {
        let attempt_seed =
            streams::derive_path(problem.rng_seed, &[streams::ATTEMPT, attempt as u64]);
        let solutions = match solve_ik(
            &problem.goal_pose,
            env,
            model,
            settings,
            &mut hooks,
            attempt_seed,
        ) {
            Ok(s) => s,
            Err(PipelineError::NoIkSolution) => continue,
            Err(_) => continue,
        };
        let seeds = seed_trajectories(&problem.start_config, &solutions, env, model, settings);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for seed in &seeds {
            let Ok(opt) = optimize_trajectory(
                &seed.trajectory,
                &problem.goal_pose,
                env,
                model,
                settings,
                &mut hooks,
            ) else {
                continue; // numerical failure: this seed is marked failed
            };
            let validation =
                validate_trajectory(&opt.trajectory, &problem.goal_pose, env, model, settings);
            if validation.valid && best.as_ref().is_none_or(|(c, _)| opt.cost < *c) {
                best = Some((opt.cost, opt.trajectory));
            }
        }
        if let Some((_, traj)) = best {
            report.success = true;
            report.attempts_used = attempt + 1;
            report.cost_breakdown = Some(full_precision_breakdown(
                &traj,
                &problem.goal_pose,
                env,
                model,
                settings,
            ));
            report.final_trajectory = Some(traj);
            break 'attempts;
        }
    }

    report.wall_time = start.elapsed().as_secs_f64();
    (report, hooks.sparsity)
}

fn full_precision_breakdown(
    traj: &[f64],
    goal: &Pose,
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
) -> CostBreakdown {
    use crate::arm::{bound_cost, pose_cost, self_collision_cost, swept_collision_cost};
    let horizon = settings.horizon;
    let w = &settings.weights;
    let (swept, _, _) =
        swept_collision_cost(traj, horizon, env, model, settings.interpolation_substeps);
    let (spheres, poses) = forward_kinematics(traj, horizon, model);
    let (self_costs, _, _) = self_collision_cost(&spheres, model);
    let (smooth, _) = smoothness_cost(traj, horizon, model.n_joints(), w);
    let (bounds, _) = bound_cost(traj, horizon, model);
    let (pose, _) = pose_cost(&poses[horizon - 1], goal, w.pose_position, w.pose_angle);
    let collision = w.collision * swept;
    let self_collision = w.self_collision * self_costs.iter().sum::<f64>();
    let bound = w.bound * bounds.iter().sum::<f64>();
    CostBreakdown {
        collision,
        self_collision,
        smoothness: smooth,
        bound,
        pose,
        total: collision + self_collision + smooth + bound + pose,
    }
}

/// Attempt statistics in the `(median, 75%, mean)` convention with
/// nearest-rank quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptStats {
    pub median: f64,
    pub p75: f64,
    pub mean: f64,
}

impl AttemptStats {
    pub fn from_attempts(attempts: &[usize]) -> Self {
        assert!(!attempts.is_empty());
        let mut sorted: Vec<usize> = attempts.to_vec();
        sorted.sort_unstable();
        let rank = |p: f64| {
            let k = (p * sorted.len() as f64).ceil() as usize;
            sorted[k.max(1) - 1] as f64
        };
        AttemptStats {
            median: rank(0.5),
            p75: rank(0.75),
            mean: sorted.iter().sum::<usize>() as f64 / sorted.len() as f64,
        }
    }
}

/// Success rate and attempt statistics of one precision configuration over a
/// frozen problem set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvEvaluation {
    pub environment: String,
    pub success_rate: f64,
    pub successes: usize,
    pub problem_count: usize,
    pub attempts: Vec<usize>,
    pub attempt_stats: AttemptStats,
    pub sparsity: SlotSparsity,
}

/// Evaluates every problem (in parallel when a rayon pool is active),
/// returning the per-problem reports alongside the aggregate. Results are
/// keyed by problem index, so worker count never changes the outcome.
pub fn evaluate_with_reports(
    problems: &[ProblemInstance],
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
    precision: &PrecisionConfig,
) -> (Vec<SuccessReport>, EnvEvaluation) {
    use rayon::prelude::*;
    assert!(!problems.is_empty(), "problem set must be nonempty");
    let results: Vec<(SuccessReport, SlotSparsity)> = problems
        .par_iter()
        .map(|p| generate_motion(p, env, model, settings, precision))
        .collect();
    let successes = results.iter().filter(|(r, _)| r.success).count();
    let attempts: Vec<usize> = results.iter().map(|(r, _)| r.attempts_used).collect();
    let mut sparsity = SlotSparsity::default();
    for (_, s) in &results {
        sparsity.merge(s);
    }
    let evaluation = EnvEvaluation {
        environment: env.name.clone(),
        success_rate: successes as f64 / problems.len() as f64,
        successes,
        problem_count: problems.len(),
        attempt_stats: AttemptStats::from_attempts(&attempts),
        attempts,
        sparsity,
    };
    (results.into_iter().map(|(r, _)| r).collect(), evaluation)
}

/// Aggregate-only variant of [`evaluate_with_reports`].
pub fn evaluate_success_rate(
    problems: &[ProblemInstance],
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
    precision: &PrecisionConfig,
) -> EnvEvaluation {
    evaluate_with_reports(problems, env, model, settings, precision).1
}

/// Decides `success_count / total >= required_rate` while evaluating as few
/// problems as possible: stops as soon as the failure count makes the target
/// unreachable (or the success count secures it). The decision is exact and
/// independent of parallelism; the rate is only known when every problem ran.
pub fn feasibility_probe(
    problems: &[ProblemInstance],
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
    precision: &PrecisionConfig,
    required_rate: f64,
) -> (bool, usize, usize) {
    use rayon::prelude::*;
    assert!(!problems.is_empty());
    let total = problems.len();
    let needed = (required_rate * total as f64).ceil() as usize;
    if needed == 0 {
        return (true, 0, 0);
    }
    let max_failures = total - needed;
    let chunk = rayon::current_num_threads().max(2) * 2;
    let mut successes = 0usize;
    let mut evaluated = 0usize;
    for batch in problems.chunks(chunk) {
        let outcomes: Vec<bool> = batch
            .par_iter()
            .map(|p| {
                generate_motion(p, env, model, settings, precision)
                    .0
                    .success
            })
            .collect();
        evaluated += outcomes.len();
        successes += outcomes.iter().filter(|&&s| s).count();
        let failures = evaluated - successes;
        if failures > max_failures {
            return (false, successes, evaluated);
        }
        if successes >= needed {
            return (true, successes, evaluated);
        }
    }
    (successes >= needed, successes, evaluated)
}

/// Samples `count` solvable-looking problems: start configurations and
/// goal-realizing configurations clear obstacles by more than the cost
/// activation margin, so the goal pose is reachable at zero collision cost.
/// Fully determined by `generator_seed`.
pub fn generate_problems(
    env: &Environment,
    model: &ArmModel,
    count: usize,
    generator_seed: u64,
) -> Result<Vec<ProblemInstance>, PipelineError> {
    const MAX_TRIES: usize = 20_000;
    let buffer = env.activation_margin + 0.03;
    let mut problems = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = streams::rng_for(streams::derive_path(
            generator_seed,
            &[streams::PROBLEM, i as u64],
        ));
        let sample_free = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<f64>, PipelineError> {
            for _ in 0..MAX_TRIES {
                let theta: Vec<f64> = model
                    .joint_limits
                    .iter()
                    .map(|&(lo, hi)| rng.random_range(lo..hi))
                    .collect();
                if config_is_clear(&theta, env, model, buffer) {
                    return Ok(theta);
                }
            }
            Err(PipelineError::ProblemSampling(MAX_TRIES))
        };
        let start_config = sample_free(&mut rng)?;
        let goal_config = sample_free(&mut rng)?;
        let (_, poses) = forward_kinematics(&goal_config, 1, model);
        problems.push(ProblemInstance {
            start_config,
            goal_pose: poses[0],
            rng_seed: rng.random::<u64>(),
        });
    }
    Ok(problems)
}

/// True when a configuration clears obstacles and itself by at least
/// `buffer` meters.
pub fn config_is_clear(theta: &[f64], env: &Environment, model: &ArmModel, buffer: f64) -> bool {
    let (spheres, _) = forward_kinematics(theta, 1, model);
    for s in 0..spheres.n_spheres {
        let (x, y, r) = spheres.sphere(0, s);
        for obs in &env.obstacles {
            let d =
                ((x - obs.center[0]).powi(2) + (y - obs.center[1]).powi(2)).sqrt() - obs.radius - r;
            if d < buffer {
                return false;
            }
        }
    }
    let pairs = model.self_collision_pairs();
    for &(a, b) in &pairs {
        let (ax, ay, ar) = spheres.sphere(0, a);
        let (bx, by, br) = spheres.sphere(0, b);
        let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() - ar - br;
        if d < buffer {
            return false;
        }
    }
    true
}
