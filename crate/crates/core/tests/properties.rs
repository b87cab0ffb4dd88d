//! Randomised invariants of the geometry, topology, metric, reward and
//! harness layers.

use proptest::prelude::*;

use eieo::curriculum::Method;
use eieo::envs::{rollout, Env, NoiseMode, Side, BARRIER_PENALTY};
use eieo::geometry::{ConvexPolygon, Point2, RegionSet, EPS};
use eieo::harness::{over_budget, ExperimentConfig};
use eieo::homotopy::{resample, same_class, signature, traj_distance, Anchors, Trajectory};
use eieo::rl::{Arch, PolicyParams};
use eieo::wasserstein::{w_infinity, EmpiricalDistribution};

fn point(range: f64) -> impl Strategy<Value = Point2> {
    (-range..range, -range..range).prop_map(|(x, y)| Point2::new(x, y))
}

/// Vertices on a circle at sorted, well-separated angles.
fn convex_polygon() -> impl Strategy<Value = ConvexPolygon> {
    (point(3.0), 0.3..4.0f64, prop::collection::vec(0.0..std::f64::consts::TAU, 3..9)).prop_filter_map(
        "needs a proper polygon",
        |(c, r, mut angles)| {
            angles.sort_by(f64::total_cmp);
            angles.dedup_by(|a, b| (*a - *b).abs() < 0.05);
            let wrap = angles.first()? + std::f64::consts::TAU - angles.last()?;
            if angles.len() < 3 || wrap < 0.05 {
                return None;
            }
            let pts = angles.iter().map(|a| Point2::new(c.x + r * a.cos(), c.y + r * a.sin())).collect();
            ConvexPolygon::new(pts).ok()
        },
    )
}

/// Smallest signed distance from `p` to the edge lines, positive inside.
fn half_plane_margin(poly: &ConvexPolygon, p: Point2) -> f64 {
    poly.edges()
        .map(|(a, b)| {
            let e = b.sub(a);
            // Inward normal of a counter-clockwise edge.
            let n = Point2::new(-e.y, e.x).scale(1.0 / e.norm());
            n.dot(p.sub(a))
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contains_matches_half_plane_oracle(
        poly in convex_polygon(),
        probes in prop::collection::vec(point(8.0), 160),
    ) {
        for p in probes {
            let margin = half_plane_margin(&poly, p);
            if margin.abs() > 1e-7 {
                prop_assert_eq!(poly.contains(p), margin > 0.0, "probe {:?} margin {}", p, margin);
            }
        }
    }

    #[test]
    fn segment_test_is_symmetric_and_agrees_with_sampling(
        poly in convex_polygon(),
        a in point(8.0),
        b in point(8.0),
    ) {
        let hit = poly.segment_intersects(a, b);
        prop_assert_eq!(hit, poly.segment_intersects(b, a));
        let samples: Vec<Point2> = (0..=1000).map(|i| a.lerp(b, i as f64 / 1000.0)).collect();
        if samples.iter().any(|p| poly.contains(*p)) {
            prop_assert!(hit);
        }
        if hit {
            // A true answer means the segment comes within sampling resolution.
            let closest = samples.iter().map(|p| poly.distance_to(*p)).fold(f64::INFINITY, f64::min);
            prop_assert!(closest <= a.dist(b) / 1000.0 + 1e-6, "closest sample {}", closest);
        }
    }

    #[test]
    fn bisect_partitions_area_and_vertices(poly in convex_polygon()) {
        let (left, right) = poly.bisect().unwrap();
        let total = left.area() + right.area();
        prop_assert!((total - poly.area()).abs() <= 1e-9 * poly.area());
        for v in poly.vertices() {
            let inside = usize::from(left.contains(*v)) + usize::from(right.contains(*v));
            prop_assert!(inside >= 1, "vertex {:?} lost", v);
            if inside == 2 {
                // Shared only when the cut passes through the vertex.
                let on_both = [&left, &right].iter().all(|h| h.vertices().iter().any(|w| w.dist(*v) < 1e-9));
                prop_assert!(on_both, "vertex {:?} in both halves off the cut", v);
            }
        }
    }

    #[test]
    fn dilation_is_monotone_and_conservative(
        poly in convex_polygon(),
        r1 in 0.0..1.5f64,
        extra in 0.0..1.5f64,
        probes in prop::collection::vec(point(8.0), 100),
    ) {
        let (small, large) = (poly.dilate(r1), poly.dilate(r1 + extra));
        for p in probes {
            if small.contains(p) {
                prop_assert!(large.contains(p));
            }
            if poly.distance_to(p) < r1 - EPS {
                prop_assert!(small.contains(p), "{:?} at distance {} outside radius {}", p, poly.distance_to(p), r1);
            }
        }
    }

    #[test]
    fn zero_dilation_keeps_membership(poly in convex_polygon(), probes in prop::collection::vec(point(8.0), 160)) {
        let region = RegionSet::single(poly, BARRIER_PENALTY).unwrap();
        let same = region.dilate(0.0);
        for p in probes {
            prop_assert_eq!(region.contains(p), same.contains(p));
        }
    }
}

// Topology and the W∞ metric ------------------------------------------------

fn anchors() -> Anchors {
    Anchors {
        start: Point2::new(0.0, 0.0),
        goal: Point2::new(0.0, 20.0),
    }
}

fn centred_barrier() -> RegionSet {
    RegionSet::single(ConvexPolygon::rect(-3.5, 9.0, 3.5, 11.0).unwrap(), BARRIER_PENALTY).unwrap()
}

/// y-monotone path through random waypoints, densified to short uniform
/// segments; `None` when it passes within 0.5 of the barrier.
fn clear_path() -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(-9.0..9.0f64, 3..8).prop_filter_map("must clear the barrier", |xs| {
        let a = anchors();
        let k = xs.len() + 1;
        let mut corners = vec![a.start];
        corners.extend(xs.iter().enumerate().map(|(i, &x)| Point2::new(x, 20.0 * (i + 1) as f64 / k as f64)));
        corners.push(a.goal);
        let mut pts = vec![a.start];
        for w in corners.windows(2) {
            let n = (w[0].dist(w[1]) / 0.2).ceil() as usize;
            pts.extend((1..=n).map(|i| w[0].lerp(w[1], i as f64 / n as f64)));
        }
        let barrier = &centred_barrier().parts[0];
        pts.iter()
            .all(|p| barrier.distance_to(*p) > 0.5)
            .then(|| Trajectory::new(pts).unwrap())
    })
}

fn walk(len: usize) -> impl Strategy<Value = Trajectory> {
    prop::collection::vec((-1.0..1.0f64, 0.1..1.0f64), len).prop_map(|steps| {
        let mut p = Point2::new(0.0, 0.0);
        let mut pts = vec![p];
        for (dx, dy) in steps {
            p = Point2::new(p.x + dx, p.y + dy);
            pts.push(p);
        }
        Trajectory::new(pts).unwrap()
    })
}

fn distribution(n: usize) -> impl Strategy<Value = Vec<Trajectory>> {
    prop::collection::vec(walk(4), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn signature_survives_resampling(t in clear_path(), extra in 0usize..200) {
        let region = centred_barrier();
        let original = signature(&t, &region, anchors()).unwrap();
        let resampled = resample(&t, t.len() + extra).unwrap();
        prop_assert_eq!(signature(&resampled, &region, anchors()).unwrap(), original);
    }

    #[test]
    fn same_class_is_an_equivalence(a in clear_path(), b in clear_path(), c in clear_path()) {
        let (region, anc) = (centred_barrier(), anchors());
        let same = |x: &Trajectory, y: &Trajectory| same_class(x, y, &region, anc).unwrap();
        prop_assert!(same(&a, &a));
        prop_assert_eq!(same(&a, &b), same(&b, &a));
        if same(&a, &b) && same(&b, &c) {
            prop_assert!(same(&a, &c));
        }
    }

    #[test]
    fn winf_is_a_pseudometric(
        (a, b, c) in (1usize..=6).prop_flat_map(|n| (distribution(n), distribution(n), distribution(n))),
        shuffle in any::<u64>(),
    ) {
        let d = |x: &[Trajectory], y: &[Trajectory]| {
            let mu = EmpiricalDistribution::new(x, 12).unwrap();
            let nu = EmpiricalDistribution::new(y, 12).unwrap();
            w_infinity(&mu, &nu).unwrap().value
        };
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        let mut permuted = a.clone();
        let k = permuted.len();
        permuted.rotate_left(shuffle as usize % k);
        prop_assert_eq!(d(&a, &permuted), 0.0);
    }

    /// Distributions on opposite sides of a barrier of width `w` are at
    /// least the closest cross-class pair apart, which is at least `w`.
    #[test]
    fn crossing_the_barrier_costs_a_jump(
        w in 0.5..6.0f64,
        left in prop::collection::vec(0.0..3.0f64, 1..6),
        right_gaps in prop::collection::vec(0.0..3.0f64, 6),
    ) {
        let line = |x: f64| Trajectory::new((0..=20).map(|i| Point2::new(x, i as f64)).collect()).unwrap();
        let ls: Vec<Trajectory> = left.iter().map(|g| line(-w / 2.0 - g)).collect();
        let rs: Vec<Trajectory> = right_gaps[..ls.len()].iter().map(|g| line(w / 2.0 + g)).collect();
        let mu = EmpiricalDistribution::new(&ls, 21).unwrap();
        let nu = EmpiricalDistribution::new(&rs, 21).unwrap();
        let closest = mu
            .samples()
            .iter()
            .flat_map(|s| nu.samples().iter().map(move |t| traj_distance(s, t).unwrap()))
            .fold(f64::INFINITY, f64::min);
        let value = w_infinity(&mu, &nu).unwrap().value;
        prop_assert!(value >= closest);
        prop_assert!(closest >= w - 1e-9);
    }
}

// Rewards and dynamics ------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reward_is_affine_in_alpha(
        x in -10.0..10.0f64,
        y in 0.0..20.0f64,
        heading in 0.0..std::f64::consts::TAU,
        steer in -3.0..3.0f64,
        alpha in 0.0..=1.0f64,
    ) {
        let env = Env::nav1(7, 0).unwrap();
        let Env::Nav(nav) = &env else { unreachable!() };
        let target = env.target_reward(nav.swerve_reward(Side::Right));
        let s = nav.state_at(Point2::new(x, y), heading, 0);
        let (relaxed_reward, weighted_reward, unit) =
            (target.relaxed(), target.with_alpha(alpha).unwrap(), target.with_alpha(1.0).unwrap());
        let step = |r| env.step(&s, &[steer], r).unwrap();
        let relaxed = step(&relaxed_reward);
        let inside = nav.barrier().contains(env.position(&relaxed.next_state));
        let weighted = step(&weighted_reward);
        let expected = relaxed.reward - if inside { alpha * 1000.0 } else { 0.0 };
        prop_assert_eq!(weighted.reward, expected);
        prop_assert_eq!(weighted.next_state, relaxed.next_state);
        prop_assert_eq!(step(&unit).reward, step(&target).reward);
    }

    #[test]
    fn frozen_rollouts_are_reproducible(seed in any::<u64>(), init in any::<u64>()) {
        let env = Env::nav1(5, 0).unwrap();
        let Env::Nav(nav) = &env else { unreachable!() };
        let reward = env.target_reward(nav.swerve_reward(Side::Left));
        let spec = env.spec();
        let policy = PolicyParams::init(Arch::Mlp { input: spec.obs_dim, hidden: 8, output: spec.action_dim }, -0.5, init);
        let a = rollout(&env, &policy, &reward, seed, NoiseMode::Frozen).unwrap();
        let b = rollout(&env, &policy, &reward, seed, NoiseMode::Frozen).unwrap();
        prop_assert_eq!(a.trajectory, b.trajectory);
        prop_assert_eq!(a.rewards, b.rewards);
    }
}

// Harness ------------------------------------------------------------------

const CONFIG: &str = r#"
schema_version = 1
seeds = [0, 1, 2]
budget = 5000
methods = ["ease_barrier", "ease_reward", "naive", "l2sp", "random"]
l2sp_coef = 0.01

[environment]
name = "nav1"
size = 5

[source]
sides = ["left"]
budget = 1000

[target]
sides = ["right"]

[schedules.ease_barrier]
stages = 3

[schedules.ease_reward]
alphas = [0.1, 1.0]
"#;

proptest! {
    #[test]
    fn majority_rule_is_a_pure_count(outcomes in prop::collection::vec(any::<bool>(), 1..12), rot in 0usize..12) {
        let failed = outcomes.iter().filter(|c| !**c).count();
        prop_assert_eq!(over_budget(&outcomes), 2 * failed > outcomes.len());
        let mut rotated = outcomes.clone();
        rotated.rotate_left(rot % outcomes.len());
        prop_assert_eq!(over_budget(&rotated), over_budget(&outcomes));
    }

    #[test]
    fn config_round_trips(
        seeds in prop::collection::vec(0u64..1000, 1..6),
        budget in 1u64..1_000_000,
        lr in 1e-5..1.0f64,
        alphas in prop::collection::vec(0.001..0.999f64, 0..4),
        stages in 1usize..6,
        coef in prop::option::of(0.5..8.0f64),
    ) {
        let mut alphas = alphas;
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        alphas.push(1.0);
        let mut cfg = ExperimentConfig::from_toml_str(CONFIG).unwrap();
        cfg.seeds = seeds;
        cfg.budget = budget;
        cfg.train.learning_rate = lr;
        cfg.schedules.ease_reward.as_mut().unwrap().alphas = alphas;
        cfg.schedules.ease_barrier.as_mut().unwrap().stages = Some(stages);
        cfg.source.side_coef = coef;
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        prop_assert_eq!(back.methods.len(), 5);
        prop_assert!(back.methods.contains(&Method::L2sp));
    }
}
