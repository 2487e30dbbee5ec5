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
//! Pendulum physics against closed forms, and Monte Carlo properties of the
//! execution model.

use core::f64::consts::PI;

use nalgebra::Vector3;
use trimanual_core::bimanual::{plan_harvest_sequence, HarvestPlan, HarvestSequenceSpec, ReachConfig};
use trimanual_core::collision::{CollisionScene, OccupancyGrid};
use trimanual_core::robot::NominalRobot;
use trimanual_core::Pose;
use trimanual_core::sim::{
    run_trials, simulate_execution, step_pendulum, FailureCause, NoiseModel, PendulumTarget, Scenario, SimWorld,
    SphericalState, DEFAULT_DT, GRAVITY,
};

fn released(theta: f64, phi_dot: f64, l: f64, damping: f64) -> PendulumTarget {
    let s = SphericalState { theta, phi: 0.0, theta_dot: 0.0, phi_dot };
    PendulumTarget::new(Vector3::new(0.0, 0.0, 1.0), l, 0.2, damping, 0.04, s).unwrap()
}

#[test]
fn small_angle_period() {
    let l = 0.3;
    let mut p = released(0.02, 0.0, l, 0.0);
    let mut crossings = Vec::new();
    let mut prev = p.rel.x;
    let mut t = 0.0;
    while t < 12.0 {
        p.step(DEFAULT_DT, &Vector3::zeros()).unwrap();
        t += DEFAULT_DT;
        let x = p.rel.x;
        if prev < 0.0 && x >= 0.0 {
            // linear interpolation of the upward zero crossing
            crossings.push(t - DEFAULT_DT * x / (x - prev));
        }
        prev = x;
    }
    let period = (crossings.last().unwrap() - crossings[0]) / (crossings.len() - 1) as f64;
    let want = 2.0 * PI * (l / GRAVITY).sqrt();
    assert!((want - 1.099).abs() < 1e-3);
    assert!(((period - want) / want).abs() < 0.01, "{period} vs {want}");
}

#[test]
fn undamped_energy_drift_over_ten_seconds() {
    for (theta, phi_dot) in [(0.5, 0.0), (0.8, 3.0), (1.2, 6.0), (0.05, 0.0)] {
        let mut p = released(theta, phi_dot, 0.3, 0.0);
        let e0 = p.energy();
        for _ in 0..10_000 {
            p = step_pendulum(&p, DEFAULT_DT, &Vector3::zeros()).unwrap();
        }
        let drift = ((p.energy() - e0) / e0).abs();
        assert!(drift < 1e-3, "theta {theta}: drift {drift}");
        assert!((p.rel.norm() - 0.3).abs() < 1e-12);
    }
}

#[test]
fn damped_energy_never_rises() {
    let mut p = released(0.9, 2.0, 0.4, 0.3);
    let mut e = p.energy();
    for _ in 0..10_000 {
        p.step(DEFAULT_DT, &Vector3::zeros()).unwrap();
        let e1 = p.energy();
        assert!(e1 <= e + 1e-12);
        e = e1;
    }
    assert!(e < 0.5 * released(0.9, 2.0, 0.4, 0.3).energy());
}

struct Fixture {
    plan: HarvestPlan,
    scene: CollisionScene,
    spec: HarvestSequenceSpec,
    pendulum: PendulumTarget,
}

fn fixture() -> Fixture {
    let robot = NominalRobot::load();
    let spot_q = [0.0, -0.6, 0.0, 1.4, 0.0, -0.8];
    let scene = robot.arm_scene(OccupancyGrid::empty(), &spot_q).unwrap();
    let fruit = robot.mount_pose(&spot_q).transform_point(&Vector3::new(0.46, 0.0, 0.0));
    let pendulum = PendulumTarget::hanging(fruit + Vector3::new(0.0, 0.0, 0.3), 0.3);
    let spec = HarvestSequenceSpec {
        reach: ReachConfig { n_starts: 8, ..ReachConfig::default() },
        ..HarvestSequenceSpec::nominal(&robot)
    };
    let pose = Pose::new(pendulum.fruit_position(), Default::default());
    let plan = plan_harvest_sequence(&pose, &robot.left_stowed, &robot.right_stowed, &scene, &spec).unwrap();
    Fixture { plan, scene, spec, pendulum }
}

fn success_rate(f: &Fixture, slip: f64, n: u64) -> f64 {
    let mut ok = 0;
    for seed in 0..n {
        let noise = NoiseModel { slip_probability: slip, seed, ..NoiseModel::default() };
        let mut world = SimWorld::new(f.pendulum.clone(), &noise, DEFAULT_DT).unwrap();
        let out = simulate_execution(&f.plan, &mut world, &f.scene, &noise, &f.spec, None).unwrap();
        assert!(out.hold && out.grasp);
        if out.detached {
            ok += 1;
        } else {
            assert_eq!(out.failure_cause, Some(FailureCause::Slip));
        }
    }
    ok as f64 / n as f64
}

#[test]
fn success_falls_with_slip_probability() {
    let f = fixture();
    let mut last = f64::INFINITY;
    for i in 0..=10 {
        let p = i as f64 / 10.0;
        let rate = success_rate(&f, p, 1000);
        assert!(rate <= last, "slip {p}: {rate} after {last}");
        last = rate;
    }
    assert_eq!(success_rate(&f, 0.0, 10), 1.0);
    assert_eq!(last, 0.0);
}

#[test]
fn heavy_pose_noise_mostly_misses_the_grasp() {
    let robot = NominalRobot::load();
    let f = fixture();
    let (mut executed, mut grasp_misses, mut other) = (0, 0, 0);
    for seed in 0..100 {
        let noise = NoiseModel { pose_noise_sigma: 0.1, seed, ..NoiseModel::default() };
        let mut world = SimWorld::new(f.pendulum.clone(), &noise, DEFAULT_DT).unwrap();
        let truth = world.fruit_position();
        let estimate = world.noisy(&truth, noise.pose_noise_sigma);
        let pose = Pose::new(estimate, Default::default());
        // estimates the arms cannot reach never get executed
        let Ok(plan) = plan_harvest_sequence(&pose, &robot.left_stowed, &robot.right_stowed, &f.scene, &f.spec) else {
            continue;
        };
        executed += 1;
        let out = simulate_execution(&plan, &mut world, &f.scene, &noise, &f.spec, None).unwrap();
        match out.failure_cause {
            Some(FailureCause::MissedGrasp) => grasp_misses += 1,
            _ => other += 1,
        }
    }
    assert!(executed >= 10, "{executed}");
    assert!(grasp_misses > other, "{grasp_misses} missed grasps of {executed}");
}

#[test]
fn mission_failures_under_heavy_noise_are_never_slips() {
    let mut sc = Scenario::nominal_indoor(0.0);
    sc.noise.pose_noise_sigma = 0.1;
    let b = run_trials(&sc, 30, 0).unwrap();
    assert_eq!(b.summary.slip, 0);
    assert!(b.summary.successes < 10, "{:?}", b.summary);
}

#[test]
fn batches_repeat_bit_for_bit() {
    let sc = Scenario::nominal_outdoor(0.2, 0.007, 0.1);
    let a = run_trials(&sc, 5, 3).unwrap();
    let b = run_trials(&sc, 5, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a.records).unwrap(), serde_json::to_string(&b.records).unwrap());
}
