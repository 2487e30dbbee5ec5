/*
  Copyright 2026 The trimanual Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
//! Minimum-displacement reach against a 2 degree joint grid on a planar
//! three-link arm, and ordering properties of full harvest plans.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trimanual_core::bimanual::{
    interpolate_joint_path, plan_harvest_sequence, solve_min_displacement_reach, tracks_in_collision, HarvestSequenceSpec,
    Phase, ReachConfig, ReachProblem,
};
use trimanual_core::collision::{CapsuleSet, CollisionScene, OccupancyGrid};
use trimanual_core::kinematics::{forward_kinematics, ChainSpec, JointSpec, JointVector};
use trimanual_core::robot::{NominalRobot, LEFT, RIGHT};
use trimanual_core::Pose;
use trimanual_oracles::planar3_grid_min;

const LINKS: [f64; 3] = [0.3, 0.25, 0.2];

fn planar3() -> ChainSpec {
    let mut joints = Vec::new();
    let mut prev = 0.0;
    for l in LINKS {
        joints.push(JointSpec::new(Vector3::z(), Pose::from_translation(prev, 0.0, 0.0), -PI, PI).unwrap());
        prev = l;
    }
    ChainSpec::new("p3", Pose::identity(), joints, Pose::from_translation(prev, 0.0, 0.0), CapsuleSet::default()).unwrap()
}

#[test]
fn displacement_within_one_percent_of_grid() {
    let chain = planar3();
    let scene = CollisionScene::new(OccupancyGrid::empty(), vec![chain.clone()], vec![]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cfg = ReachConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let q0: [f64; 3] = core::array::from_fn(|_| rng.random_range(-2.5..2.5));
        let r = rng.random_range(0.15..0.65);
        let a = rng.random_range(-PI..PI);
        let goal = Vector3::new(r * a.cos(), r * a.sin(), 0.0);
        let q = solve_min_displacement_reach(&ReachProblem {
            chain: "p3",
            q0: JointVector(q0.to_vec()),
            goal,
            scene: &scene,
            fixed: vec![],
            cfg: cfg.clone(),
        })
        .unwrap();
        assert!(chain.is_admissible(&q));
        assert!((forward_kinematics(&chain, &q).unwrap().position - goal).norm() <= cfg.tol);
        let cost: f64 = q.iter().zip(q0).map(|(a, b)| (a - b).powi(2)).sum();
        let (_, grid) = planar3_grid_min(LINKS, q0, (goal.x, goal.y), cfg.tol, 2.0).expect("grid has a reaching point");
        worst = worst.max(cost / grid.max(1e-12));
        assert!(cost <= grid * 1.01 + 1e-9, "solver {cost} vs grid {grid} for goal {goal:?} from {q0:?}");
    }
    eprintln!("largest solver/grid displacement ratio {worst:.4}");
}

#[test]
fn interpolation_gaps_never_exceed_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..500 {
        let n = rng.random_range(1..7);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let step = rng.random_range(0.005..0.1);
        let dur = rng.random_range(0.1..5.0);
        let w = interpolate_joint_path(&a, &b, step, dur).unwrap();
        assert_eq!(w.first().unwrap().q.as_slice(), a.as_slice());
        assert_eq!(w.last().unwrap().q.as_slice(), b.as_slice());
        assert_eq!(w.first().unwrap().t, 0.0);
        assert!((w.last().unwrap().t - dur).abs() < 1e-12);
        for p in w.windows(2) {
            assert!(p[1].t > p[0].t);
            assert!(p[0].q.inf_distance(&p[1].q) <= step + 1e-12);
        }
    }
}

#[test]
fn harvest_plans_keep_order_and_return_home() {
    let robot = NominalRobot::load();
    let spot_q = [0.0, -0.6, 0.0, 1.4, 0.0, -0.8];
    let scene = robot.arm_scene(OccupancyGrid::empty(), &spot_q).unwrap();
    let mount = robot.mount_pose(&spot_q);
    let spec = HarvestSequenceSpec {
        reach: ReachConfig { n_starts: 8, ..ReachConfig::default() },
        ..HarvestSequenceSpec::nominal(&robot)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut planned = 0;
    for _ in 0..12 {
        let local = Vector3::new(rng.random_range(0.42..0.47), rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
        let fruit = Pose::new(mount.transform_point(&local), Default::default());
        let Ok(plan) = plan_harvest_sequence(&fruit, &robot.left_stowed, &robot.right_stowed, &scene, &spec) else {
            continue;
        };
        planned += 1;
        let hold = plan.phase_interval(Phase::LeftHold).unwrap();
        let twist = plan.phase_interval(Phase::Twist).unwrap();
        assert!(hold.1 <= twist.0 && hold.0 < hold.1);
        assert!(plan.phase_interval(Phase::LeftReach).unwrap().1 <= plan.phase_interval(Phase::RightReach).unwrap().0);
        assert_eq!(plan.state_at(LEFT, plan.duration()).unwrap().0, robot.left_stowed);
        assert_eq!(plan.state_at(RIGHT, plan.duration()).unwrap().0, robot.right_stowed);
        let lefts: Vec<_> = plan.segments.iter().filter(|s| s.chain == LEFT).collect();
        let rights: Vec<_> = plan.segments.iter().filter(|s| s.chain == RIGHT).collect();
        for l in &lefts {
            for r in &rights {
                assert!(!tracks_in_collision(&scene, &[l, r], &[]).unwrap());
            }
        }
        let (ql, _) = plan.state_at(LEFT, hold.1).unwrap();
        let tip = forward_kinematics(scene.chain(LEFT).unwrap(), &ql).unwrap().position;
        assert!((tip - plan.left_goal).norm() <= spec.reach.tol);
    }
    assert!(planned >= 10, "{planned} of 12 planned");
}
