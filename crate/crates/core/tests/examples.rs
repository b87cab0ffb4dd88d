//! Worked examples spanning several modules.

use eieo::curriculum::{transfer, Method, TransferReport};
use eieo::envs::{Env, NoiseMode, RewardSpec, Side, BARRIER_PENALTY};
use eieo::geometry::{ConvexPolygon, Point2, RegionSet};
use eieo::harness::{Experiment, ExperimentConfig, ResultsTable};
use eieo::homotopy::{same_class, Anchors, Trajectory};
use eieo::rl::{cell_loss, evaluate, train, Arch, Checkpoint, L2Sp, LandscapeConfig, PolicyParams, TrainConfig};

fn path(points: &[(f64, f64)]) -> Trajectory {
    Trajectory::new(points.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap()
}

fn nav1() -> Env {
    Env::nav1(5, 0).unwrap()
}

fn swerve(env: &Env, side: Side) -> RewardSpec {
    let Env::Nav(nav) = env else { unreachable!() };
    env.target_reward(nav.swerve_reward(side))
}

#[test]
fn differently_shaped_paths_on_one_side_share_a_class() {
    let region = RegionSet::single(ConvexPolygon::rect(-1.0, 4.0, 1.0, 6.0).unwrap(), BARRIER_PENALTY).unwrap();
    let anchors = Anchors {
        start: Point2::new(0.0, 0.0),
        goal: Point2::new(0.0, 10.0),
    };
    let wide = path(&[(0.0, 0.0), (4.0, 3.0), (5.0, 7.0), (0.0, 10.0)]);
    let tight = path(&[(0.0, 0.0), (1.5, 4.0), (1.5, 6.0), (0.0, 10.0)]);
    let wiggly = path(&[(0.0, 0.0), (3.0, 1.0), (1.2, 5.0), (6.0, 6.0), (2.0, 9.0), (0.0, 10.0)]);
    let left = path(&[(0.0, 0.0), (-2.0, 5.0), (0.0, 10.0)]);
    assert!(same_class(&wide, &tight, &region, anchors).unwrap());
    assert!(same_class(&tight, &wiggly, &region, anchors).unwrap());
    assert!(!same_class(&wide, &left, &region, anchors).unwrap());
}

#[test]
fn single_episode_evaluation_has_zero_spread() {
    let env = nav1();
    let reward = swerve(&env, Side::Left);
    let policy = PolicyParams::init(Arch::Mlp { input: env.spec().obs_dim, hidden: 8, output: 1 }, -0.5, 1);
    let one = evaluate(&env, &reward, &policy, 1, 4, NoiseMode::Fresh).unwrap();
    assert_eq!(one.std_return, 0.0);
    let a = evaluate(&env, &reward, &policy, 12, 4, NoiseMode::Fresh).unwrap();
    let b = evaluate(&env, &reward, &policy, 12, 4, NoiseMode::Fresh).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_sample_landscape_cells_are_deterministic() {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/landscape.toml");
    let env = ExperimentConfig::load(config.as_ref()).unwrap().environment.build().unwrap();
    let reward = swerve(&env, Side::Right);
    let cfg = LandscapeConfig {
        samples_per_cell: 1,
        noise: NoiseMode::Frozen,
        ..LandscapeConfig::default()
    };
    let policy = PolicyParams::new(Arch::Linear { input: 2, output: 1 }, vec![0.4, -0.2], vec![cfg.log_std]).unwrap();
    let first = cell_loss(&env, &reward, &policy, &cfg).unwrap();
    assert_eq!(first, cell_loss(&env, &reward, &policy, &cfg).unwrap());
}

#[test]
fn relaxed_reward_ignores_the_barrier_and_alpha_one_restores_it() {
    let env = Env::nav1(7, 0).unwrap();
    let Env::Nav(nav) = &env else { unreachable!() };
    let target = swerve(&env, Side::Right);
    let relaxed = target.relaxed();
    let full = target.with_alpha(1.0).unwrap();
    let barrier = env.barrier_regions();
    let base_only = RewardSpec::target(nav.swerve_reward(Side::Right), env.barrier().emptied());
    let mut inside = 0;
    for p in nav.field.probe_grid(60) {
        let s = nav.state_at(p, std::f64::consts::FRAC_PI_2, 0);
        for a in [-1.0, 0.0, 0.7] {
            let base = env.step(&s, &[a], &base_only).unwrap();
            let r = env.step(&s, &[a], &relaxed).unwrap();
            assert_eq!(r.reward, base.reward);
            let t = env.step(&s, &[a], &target).unwrap();
            assert_eq!(env.step(&s, &[a], &full).unwrap().reward, t.reward);
            if barrier.contains(env.position(&t.next_state)) {
                inside += 1;
                assert_eq!(t.reward, base.reward - 1000.0);
            }
        }
    }
    assert!(inside > 0);
}

#[test]
fn l2sp_pull_vanishes_at_its_anchor() {
    let anchor = vec![0.3, -1.2, 4.0];
    let pull = L2Sp { coef: 0.5, anchor: anchor.clone() };
    assert_eq!(pull.gradient(&anchor), vec![0.0; 3]);
}

#[test]
fn identical_training_gives_identical_checkpoint_bytes() {
    let env = nav1();
    let reward = swerve(&env, Side::Left).relaxed();
    let init = PolicyParams::init(Arch::Mlp { input: env.spec().obs_dim, hidden: 8, output: 1 }, -0.5, 9);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        batch_episodes: 4,
        max_interaction_steps: 4096,
        max_update_norm: 0.05,
        seed: 5,
        ..TrainConfig::default()
    };
    let bytes = || {
        let report = train(&env, &reward, &init, &cfg).unwrap();
        Checkpoint::new(report.final_theta, 5, "nav1-5/left").to_string_pretty().unwrap()
    };
    assert_eq!(bytes(), bytes());
}

const SINGLE_STEP: &str = r#"
schema_version = 1
seeds = [0]
budget = 4000
methods = ["ease_reward"]
# Every phase converges at its first evaluation.
stage_convergence = { rule = "above", min = -1e12 }

[environment]
name = "nav1"
size = 5

[policy]
hidden = 8

[source]
sides = ["left"]
budget = 1000

[target]
sides = ["right"]

[schedules.ease_reward]
alphas = [1.0]

[train]
learning_rate = 0.01
batch_episodes = 4
eval_every = 1024
"#;

#[test]
fn single_step_curriculum_trains_the_relaxed_policy_on_the_target() {
    let exp = Experiment::new(ExperimentConfig::from_toml_str(SINGLE_STEP).unwrap()).unwrap();
    let source = PolicyParams::init(exp.arch, -0.5, 2);
    let job = exp.job(Method::EaseReward, 0, source, &exp.target_train(None)).unwrap();
    let out = transfer(&job).unwrap();
    let rewards: Vec<_> = out.stages.iter().map(|s| &s.reward).collect();
    assert_eq!(rewards.len(), 2);
    assert_eq!(*rewards[0], job.target.relaxed());
    assert_eq!(*rewards[1], job.target);
}

#[test]
fn grid_of_three_methods_by_five_seeds_gives_three_rows() {
    let methods = [Method::EaseBarrier, Method::Naive, Method::Random];
    let reports: Vec<TransferReport> = methods
        .iter()
        .flat_map(|&method| {
            (0..5).map(move |seed| TransferReport {
                method,
                env: "nav1-7".into(),
                seed,
                total_steps: 1000 * (seed + 1),
                // Naive fails on three seeds.
                converged: method != Method::Naive || seed < 2,
                stage_steps: vec![1000 * (seed + 1)],
                final_mean_return: 0.0,
                final_class: None,
                failed_stage: None,
            })
        })
        .collect();
    assert_eq!(reports.len(), 15);
    let table = ResultsTable::from_reports(&reports);
    assert_eq!(table.rows.len(), 3);
    let naive = table.rows.iter().find(|r| r.method == Method::Naive).unwrap();
    assert!(naive.over_budget);
    assert!(table.to_text().contains(">budget"));
}
