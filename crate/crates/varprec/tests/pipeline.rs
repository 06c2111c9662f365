//! Pipeline integration tests: determinism, seeding behavior, validation
//! independence, and the precision sanity ordering.

use varprec::arm::{forward_kinematics, ArmModel, Circle, Environment, ProblemInstance};
use varprec::fpcodec::FpFormat;
use varprec::pipeline::{
    dense_collision_free, evaluate_success_rate, generate_motion, generate_problems,
    linear_trajectory, optimize_trajectory, seed_trajectories, solve_ik, validate_trajectory,
    Hooks, PipelineSettings, PrecisionConfig,
};

fn small_settings() -> PipelineSettings {
    PipelineSettings {
        ik_seeds: 24,
        to_seeds: 2,
        max_attempts: 3,
        ..PipelineSettings::default()
    }
}

fn one_wall_env() -> Environment {
    Environment {
        name: "one_wall".into(),
        obstacles: vec![Circle {
            center: [0.0, 0.75],
            radius: 0.28,
        }],
        activation_margin: 0.05,
    }
}

/// Mirrors the bundled pillars world: enough obstacles that straight
/// interpolations between random clear configurations often collide.
fn pillars_env() -> Environment {
    Environment {
        name: "pillars".into(),
        obstacles: vec![
            Circle {
                center: [0.8, 0.6],
                radius: 0.13,
            },
            Circle {
                center: [-0.65, 0.9],
                radius: 0.13,
            },
            Circle {
                center: [0.2, -1.05],
                radius: 0.15,
            },
        ],
        activation_margin: 0.05,
    }
}

#[test]
fn free_space_goal_succeeds_on_first_attempt() {
    let model = ArmModel::default_7link();
    let env = Environment::empty("void", 0.05);
    let settings = small_settings();
    let problems = generate_problems(&env, &model, 1, 11).unwrap();
    let (report, _) = generate_motion(
        &problems[0],
        &env,
        &model,
        &settings,
        &PrecisionConfig::full_precision(),
    );
    assert!(report.success);
    assert_eq!(report.attempts_used, 1);
    let traj = report.final_trajectory.as_ref().unwrap();
    assert_eq!(traj.len(), settings.horizon * model.n_joints());
    let v = validate_trajectory(traj, &problems[0].goal_pose, &env, &model, &settings);
    assert!(v.valid);
    // Success implies the terminal pose is inside tolerance, re-checked here
    // independently of the optimizer's cost.
    let n = model.n_joints();
    let (_, poses) = forward_kinematics(&traj[(settings.horizon - 1) * n..], 1, &model);
    let dx = poses[0].position[0] - problems[0].goal_pose.position[0];
    let dy = poses[0].position[1] - problems[0].goal_pose.position[1];
    assert!(dx.hypot(dy) <= settings.goal_position_tolerance);
}

#[test]
fn impossible_goal_exhausts_attempts() {
    let model = ArmModel::default_7link();
    let env = Environment {
        name: "blocked".into(),
        obstacles: vec![Circle {
            center: [1.2, 0.0],
            radius: 0.5,
        }],
        activation_margin: 0.05,
    };
    let settings = small_settings();
    // Goal pose deep inside the obstacle: IK may reach the pose but any
    // realizing configuration collides, so validation always fails.
    let problem = ProblemInstance {
        start_config: vec![1.5, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3],
        goal_pose: varprec::arm::Pose {
            position: [1.2, 0.0],
            angle: 0.0,
        },
        rng_seed: 5,
    };
    let (report, _) = generate_motion(
        &problem,
        &env,
        &model,
        &settings,
        &PrecisionConfig::full_precision(),
    );
    assert!(!report.success);
    assert_eq!(report.attempts_used, settings.max_attempts);
    assert!(report.final_trajectory.is_none());
}

#[test]
fn reports_are_deterministic_across_worker_counts() {
    let model = ArmModel::default_7link();
    let env = one_wall_env();
    let settings = small_settings();
    let problems = generate_problems(&env, &model, 6, 123).unwrap();
    let config = PrecisionConfig::uniform(FpFormat::new(4, 3).unwrap());

    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| evaluate_success_rate(&problems, &env, &model, &settings, &config))
    };
    let a = run(1);
    let b = run(2);
    assert_eq!(a.success_rate, b.success_rate);
    assert_eq!(a.attempts, b.attempts);
    assert_eq!(a.sparsity, b.sparsity);
    assert_eq!(
        serde_json::to_string(&a.attempt_stats).unwrap(),
        serde_json::to_string(&b.attempt_stats).unwrap()
    );
}

/// Finds a pair of clear configurations in `env` whose direct interpolation
/// collides; the construction backbone for the seeding and repair tests.
fn colliding_pair(
    env: &Environment,
    model: &ArmModel,
    settings: &PipelineSettings,
) -> (Vec<f64>, Vec<f64>) {
    let probe = generate_problems(env, model, 24, 4242).unwrap();
    let configs: Vec<Vec<f64>> = probe.into_iter().map(|p| p.start_config).collect();
    for a in &configs {
        for b in &configs {
            let direct = linear_trajectory(a, b, settings.horizon);
            if !dense_collision_free(
                &direct,
                settings.horizon,
                env,
                model,
                settings.validation_substeps,
            ) {
                return (a.clone(), b.clone());
            }
        }
    }
    panic!("environment too empty to construct a colliding interpolation");
}

#[test]
fn wall_forces_retract_seeding() {
    let model = ArmModel::default_7link();
    let env = pillars_env();
    let settings = small_settings();
    let (start, goal_config) = colliding_pair(&env, &model, &settings);
    let (_, poses) = forward_kinematics(&goal_config, 1, &model);
    let mut hooks = Hooks::new(PrecisionConfig::full_precision());
    let sols = solve_ik(&poses[0], &env, &model, &settings, &mut hooks, 77).unwrap();
    let seeds = seed_trajectories(&start, &sols, &env, &model, &settings);
    assert!(!seeds.is_empty());
    // Unflagged seeds certify collision-free interpolations, whether direct
    // or through the retract posture.
    for seed in &seeds {
        if !seed.flagged {
            assert!(dense_collision_free(
                &seed.trajectory,
                settings.horizon,
                &env,
                &model,
                settings.validation_substeps
            ));
        }
    }
    // The retract detour itself must be available from any clear start.
    let retract_path = linear_trajectory(&start, &model.retract_config, settings.horizon);
    assert!(dense_collision_free(
        &retract_path,
        settings.horizon,
        &env,
        &model,
        settings.validation_substeps
    ));
}

#[test]
fn colliding_seed_is_repaired_at_full_precision() {
    let model = ArmModel::default_7link();
    let env = pillars_env();
    let settings = small_settings();
    let (start, end) = colliding_pair(&env, &model, &settings);
    let seed = linear_trajectory(&start, &end, settings.horizon);
    assert!(!dense_collision_free(
        &seed,
        settings.horizon,
        &env,
        &model,
        settings.validation_substeps
    ));
    let (_, poses) = forward_kinematics(&end, 1, &model);
    let mut hooks = Hooks::new(PrecisionConfig::full_precision());
    let opt = optimize_trajectory(&seed, &poses[0], &env, &model, &settings, &mut hooks).unwrap();
    let v = validate_trajectory(&opt.trajectory, &poses[0], &env, &model, &settings);
    assert!(v.valid, "violations: {:?}", v.violations);
    // Start stayed clamped.
    assert_eq!(&opt.trajectory[..7], &seed[..7]);
}

#[test]
fn validation_ignores_precision_config() {
    let model = ArmModel::default_7link();
    let env = one_wall_env();
    let settings = small_settings();
    let problems = generate_problems(&env, &model, 2, 55).unwrap();
    // Produce trajectories under two very different precision configs; the
    // validator must give the same verdict for the same input trajectory.
    let coarse = PrecisionConfig::uniform(FpFormat::new(2, 1).unwrap());
    let (r1, _) = generate_motion(&problems[0], &env, &model, &settings, &coarse);
    if let Some(traj) = &r1.final_trajectory {
        let v1 = validate_trajectory(traj, &problems[0].goal_pose, &env, &model, &settings);
        let v2 = validate_trajectory(traj, &problems[0].goal_pose, &env, &model, &settings);
        assert_eq!(v1, v2);
        assert!(v1.valid);
    }
    // And a fixed synthetic trajectory validates identically regardless of
    // any precision machinery having run before.
    let traj = linear_trajectory(&vec![0.1; 7], &vec![0.4; 7], settings.horizon);
    let (_, poses) = forward_kinematics(&vec![0.4; 7], 1, &model);
    let before = validate_trajectory(&traj, &poses[0], &env, &model, &settings);
    let _ = generate_motion(&problems[1], &env, &model, &settings, &coarse);
    let after = validate_trajectory(&traj, &poses[0], &env, &model, &settings);
    assert_eq!(before, after);
}

#[test]
fn coarsest_config_is_strictly_below_baseline_on_a_hard_env() {
    let model = ArmModel::default_7link();
    let env = pillars_env();
    let settings = PipelineSettings::default();
    let problems = generate_problems(&env, &model, 12, 2024).unwrap();
    let fp32 = evaluate_success_rate(
        &problems,
        &env,
        &model,
        &settings,
        &PrecisionConfig::full_precision(),
    );
    let coarse = evaluate_success_rate(
        &problems,
        &env,
        &model,
        &settings,
        &PrecisionConfig::uniform(FpFormat::new(2, 1).unwrap()),
    );
    assert!(
        coarse.success_rate < fp32.success_rate,
        "all-E2M1 {} vs baseline {}",
        coarse.success_rate,
        fp32.success_rate
    );
}

#[test]
fn single_to_seed_yields_single_trajectory() {
    let model = ArmModel::default_7link();
    let env = Environment::empty("void", 0.05);
    let settings = PipelineSettings {
        to_seeds: 1,
        ik_seeds: 8,
        ..PipelineSettings::default()
    };
    let problems = generate_problems(&env, &model, 1, 3).unwrap();
    let mut hooks = Hooks::new(PrecisionConfig::full_precision());
    let sols = solve_ik(
        &problems[0].goal_pose,
        &env,
        &model,
        &settings,
        &mut hooks,
        1,
    )
    .unwrap();
    let seeds = seed_trajectories(&problems[0].start_config, &sols, &env, &model, &settings);
    assert_eq!(seeds.len(), 1);
}

#[test]
fn gradient_tensor_is_sparse_on_an_easy_environment() {
    let model = ArmModel::default_7link();
    // One obstacle far from the bulk of the workspace.
    let env = Environment {
        name: "easy".into(),
        obstacles: vec![Circle {
            center: [1.7, -1.4],
            radius: 0.2,
        }],
        activation_margin: 0.05,
    };
    let settings = small_settings();
    let problems = generate_problems(&env, &model, 4, 9).unwrap();
    let eval = evaluate_success_rate(
        &problems,
        &env,
        &model,
        &settings,
        &PrecisionConfig::full_precision(),
    );
    let frac = eval
        .sparsity
        .fraction(varprec::pipeline::TensorSlot::GradOutSpheres);
    assert!(frac > 0.9, "grad_out_spheres zero fraction {frac}");
}

#[test]
fn full_precision_beats_coarsest_with_single_attempts() {
    let model = ArmModel::default_7link();
    let env = one_wall_env();
    let settings = PipelineSettings {
        max_attempts: 1,
        ik_seeds: 24,
        to_seeds: 2,
        ..PipelineSettings::default()
    };
    let problems = generate_problems(&env, &model, 10, 321).unwrap();
    let fp32 = evaluate_success_rate(
        &problems,
        &env,
        &model,
        &settings,
        &PrecisionConfig::full_precision(),
    );
    let e2m1 = evaluate_success_rate(
        &problems,
        &env,
        &model,
        &settings,
        &PrecisionConfig::uniform(FpFormat::new(2, 1).unwrap()),
    );
    assert!(
        fp32.successes >= e2m1.successes,
        "fp32 {} vs e2m1 {}",
        fp32.successes,
        e2m1.successes
    );
}

#[test]
fn identity_config_run_is_bit_identical_to_unhooked() {
    // The hook path with all-E8M23 must reproduce the raw cost functions
    // exactly: compare a hooked IK cost evaluation against the manual
    // unhooked assembly on the same inputs.
    let model = ArmModel::default_7link();
    let env = one_wall_env();
    let settings = small_settings();
    let pairs = model.self_collision_pairs();
    let theta: Vec<f64> = (0..7).map(|i| 0.4 - 0.1 * i as f64).collect();
    let goal = forward_kinematics(&vec![0.2; 7], 1, &model).1[0];

    let mut hooks = Hooks::new(PrecisionConfig::full_precision());
    let (hooked_cost, hooked_grad) = varprec::pipeline::ik_cost_and_grad(
        &theta, &goal, &env, &model, &pairs, &settings, &mut hooks,
    );

    // Unhooked: same math, no hook calls.
    let w = &settings.weights;
    let (spheres, poses) = forward_kinematics(&theta, 1, &model);
    let field = varprec::arm::collision_field(&spheres, &env);
    let (ccosts, cgrad) = varprec::arm::collision_eval(&field);
    let vec = varprec::arm::self_collision_vec(&spheres, &pairs, env.activation_margin);
    let (scosts, sgrad) = varprec::arm::self_collision_eval(&vec, &spheres, &pairs);
    let (pcost, pgrad) = varprec::arm::pose_cost(&poses[0], &goal, w.pose_position, w.pose_angle);
    let (bcosts, bgrad) = varprec::arm::bound_cost(&theta, 1, &model);
    let mut sphere_grad = varprec::arm::SphereGrad::zeros(1, model.n_spheres());
    sphere_grad.scaled_accumulate(&cgrad, w.collision);
    sphere_grad.scaled_accumulate(&sgrad, w.self_collision);
    let mut grad = varprec::arm::backward_kinematics(&theta, 1, &sphere_grad, &model);
    varprec::arm::ee_pose_backward(&theta, pgrad, &model, &mut grad);
    for j in 0..7 {
        grad[j] += w.bound * bgrad[j];
    }
    let cost = w.collision * ccosts[0] + w.self_collision * scosts[0] + pcost + w.bound * bcosts[0];

    assert_eq!(hooked_cost.to_bits(), cost.to_bits());
    for (h, u) in hooked_grad.iter().zip(&grad) {
        assert_eq!(h.to_bits(), u.to_bits());
    }
}
