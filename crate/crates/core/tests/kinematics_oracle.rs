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
//! Forward kinematics against explicit 4x4 matrix products, Jacobians against
//! analytic columns, and the IK round trip on the base arm.

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trimanual_core::collision::CapsuleSet;
use trimanual_core::kinematics::{forward_kinematics, ik_solve, jacobian_numeric, link_frames, ChainSpec, IkConfig, JointSpec, PoseMask};
use trimanual_core::robot::NominalRobot;
use trimanual_core::Pose;
use trimanual_oracles::{chain_frames, chain_tool, homogeneous, quat_matrix, MatJoint};

fn rand_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = core::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>();
        if n > 0.01 && n <= 1.0 {
            return q;
        }
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

fn pose_and_matrix(rng: &mut ChaCha8Rng, s: f64) -> (Pose, Matrix4<f64>) {
    let q = rand_quat(rng);
    let t = rand_vec(rng, s);
    let pose = Pose::new(t, UnitQuaternion::new_normalize(Quaternion::new(q[0], q[1], q[2], q[3])));
    (pose, homogeneous(&quat_matrix(q), &t))
}

struct Case {
    chain: ChainSpec,
    base: Matrix4<f64>,
    joints: Vec<MatJoint>,
    tool: Matrix4<f64>,
}

fn random_chain(rng: &mut ChaCha8Rng) -> Case {
    let n = rng.random_range(1..=7);
    let (base_pose, base) = pose_and_matrix(rng, 1.0);
    let (tool_pose, tool) = pose_and_matrix(rng, 0.2);
    let mut specs = Vec::new();
    let mut joints = Vec::new();
    for _ in 0..n {
        let axis = loop {
            let a = rand_vec(rng, 1.0);
            if a.norm() > 0.1 {
                break a;
            }
        };
        let (off_pose, off) = pose_and_matrix(rng, 0.3);
        let lo = rng.random_range(-3.0..-0.5);
        let hi = rng.random_range(0.5..3.0);
        specs.push(JointSpec::new(axis, off_pose, lo, hi).unwrap());
        joints.push(MatJoint { offset: off, axis });
    }
    let chain = ChainSpec::new("random", base_pose, specs, tool_pose, CapsuleSet::default()).unwrap();
    Case { chain, base, joints, tool }
}

fn random_q(rng: &mut ChaCha8Rng, chain: &ChainSpec) -> Vec<f64> {
    chain.joints.iter().map(|j| rng.random_range(j.limit_lo..=j.limit_hi)).collect()
}

fn pose_matrix(p: &Pose) -> Matrix4<f64> {
    p.orientation.to_homogeneous().append_translation(&p.position)
}

#[test]
fn fk_matches_matrix_products_on_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c = random_chain(&mut rng);
        let q = random_q(&mut rng, &c.chain);
        let got = pose_matrix(&forward_kinematics(&c.chain, &q).unwrap());
        let want = chain_tool(&c.base, &c.joints, &c.tool, &q);
        worst = worst.max((got - want).abs().max());
        let frames = link_frames(&c.chain, &q).unwrap();
        let oracle = chain_frames(&c.base, &c.joints, &q);
        assert_eq!(frames.len(), oracle.len());
        for (f, o) in frames.iter().zip(&oracle) {
            worst = worst.max((pose_matrix(f) - o).abs().max());
        }
    }
    assert!(worst <= 1e-10, "largest entry error {worst:e}");
}

#[test]
fn fk_is_bitwise_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let c = random_chain(&mut rng);
        let q = random_q(&mut rng, &c.chain);
        let a = forward_kinematics(&c.chain, &q).unwrap();
        let b = forward_kinematics(&c.chain.clone(), &q.clone()).unwrap();
        assert_eq!(a.quat_wxyz().map(f64::to_bits), b.quat_wxyz().map(f64::to_bits));
        assert_eq!(a.position.map(f64::to_bits), b.position.map(f64::to_bits));
    }
}

fn planar(links: &[f64]) -> ChainSpec {
    let mut joints = Vec::new();
    let mut prev = 0.0;
    for &l in links {
        joints.push(JointSpec::new(Vector3::z(), Pose::from_translation(prev, 0.0, 0.0), -3.2, 3.2).unwrap());
        prev = l;
    }
    ChainSpec::new("planar", Pose::identity(), joints, Pose::from_translation(prev, 0.0, 0.0), CapsuleSet::default()).unwrap()
}

#[test]
fn planar_jacobian_matches_closed_form() {
    let links = [0.4, 0.3, 0.2];
    let chain = planar(&links);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let j = jacobian_numeric(&chain, &q, 1e-5).unwrap();
        let cum: Vec<f64> = (0..3).map(|i| q[..=i].iter().sum()).collect();
        for k in 0..3 {
            let dx: f64 = (k..3).map(|i| -links[i] * cum[i].sin()).sum();
            let dy: f64 = (k..3).map(|i| links[i] * cum[i].cos()).sum();
            let want = [dx, dy, 0.0, 0.0, 0.0, 1.0];
            for r in 0..6 {
                assert!((j[(r, k)] - want[r]).abs() <= 1e-6, "row {r} col {k}: {} vs {}", j[(r, k)], want[r]);
            }
        }
    }
}

#[test]
fn jacobian_matches_screw_columns_on_random_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..200 {
        let c = random_chain(&mut rng);
        let n = c.chain.dof();
        let mut q = random_q(&mut rng, &c.chain);
        c.chain.joints.iter().zip(q.iter_mut()).for_each(|(j, v)| *v = v.clamp(j.limit_lo + 1e-3, j.limit_hi - 1e-3));
        let jac = jacobian_numeric(&c.chain, &q, 1e-6).unwrap();
        let frames = chain_frames(&c.base, &c.joints, &q);
        let tip = (frames[n] * c.tool).fixed_view::<3, 1>(0, 3).into_owned();
        for k in 0..n {
            let f = frames[k + 1];
            let w = f.fixed_view::<3, 3>(0, 0) * c.joints[k].axis.normalize();
            let o = f.fixed_view::<3, 1>(0, 3).into_owned();
            let v = w.cross(&(tip - o));
            for r in 0..3 {
                assert!((jac[(r, k)] - v[r]).abs() <= 1e-6);
                assert!((jac[(r + 3, k)] - w[r]).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn step_sizes_agree() {
    let robot = NominalRobot::load();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..20 {
        let mut q = random_q(&mut rng, &robot.spot);
        robot.spot.joints.iter().zip(q.iter_mut()).for_each(|(j, v)| *v = v.clamp(j.limit_lo + 1e-3, j.limit_hi - 1e-3));
        let a = jacobian_numeric(&robot.spot, &q, 1e-6).unwrap();
        let b = jacobian_numeric(&robot.spot, &q, 1e-4).unwrap();
        assert!((a - b).abs().max() <= 1e-5);
    }
}

#[test]
fn ik_round_trip_on_base_arm() {
    let robot = NominalRobot::load();
    let chain = &robot.spot;
    let cfg = IkConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut ok = 0;
    for _ in 0..1000 {
        let q_star = random_q(&mut rng, chain);
        let target = forward_kinematics(chain, &q_star).unwrap();
        let mut seed: Vec<f64> = q_star.iter().map(|v| v + rng.random_range(-0.2..0.2)).collect();
        chain.clamp(&mut seed);
        let out = ik_solve(chain, &target, &seed, PoseMask::FULL, &cfg).unwrap();
        assert!(chain.is_admissible(&out.q));
        let reached = forward_kinematics(chain, &out.q).unwrap();
        if out.converged {
            assert!(out.residual_pos <= cfg.tol_pos && out.residual_rot <= cfg.tol_rot);
        }
        if reached.distance_to(&target) <= 1e-4 {
            ok += 1;
        }
    }
    assert!(ok >= 990, "{ok} of 1000 recovered");
}
