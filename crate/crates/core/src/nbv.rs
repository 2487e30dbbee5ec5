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
//! Viewpoint placement for the base arm.
//!
//! The tool is driven towards a goal pose in front of the target while the
//! position error and the roll/pitch error are traded off by two weights. Yaw
//! may be left free. The tool must stay at least `d_min` away from the target
//! and every returned configuration is checked against the collision scene.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collision::{chains_in_collision, CollisionError, CollisionScene};
use crate::kinematics::{fk_unchecked, ik_solve, ChainSpec, IkConfig, JointVector, PoseMask};
use crate::pose::{wrap_angle, Pose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NbvConfig {
    /// Weight `A` on the squared position error.
    pub weight_pos: f64,
    /// Weight `B` on the squared roll and pitch errors.
    pub weight_rot: f64,
    pub d_min: f64,
    pub fixed_roll: f64,
    pub fixed_pitch: f64,
    pub yaw_free: bool,
    pub n_starts: usize,
    pub seed: u64,
    /// Extra distance between the goal viewpoint and the `d_min` sphere.
    pub viewpoint_margin: f64,
    /// Solutions farther than `d_min + standoff_band` from the target are not feasible.
    pub standoff_band: f64,
    pub max_iters: usize,
    pub ik: IkConfig,
}

impl Default for NbvConfig {
    fn default() -> Self {
        Self {
            weight_pos: 1.0,
            weight_rot: 10.0,
            d_min: 0.45,
            fixed_roll: 0.0,
            fixed_pitch: 0.0,
            yaw_free: true,
            n_starts: 64,
            seed: 0,
            viewpoint_margin: 0.01,
            standoff_band: 0.05,
            max_iters: 60,
            ik: IkConfig {
                max_iters: 100,
                ..IkConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NbvError {
    #[error("invalid view configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("target pose is not finite")]
    NonFiniteTarget,
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

impl NbvConfig {
    pub fn validate(&self) -> Result<(), NbvError> {
        if !(self.weight_pos >= 0.0 && self.weight_rot >= 0.0 && self.weight_pos + self.weight_rot > 0.0) {
            return Err(NbvError::InvalidConfig("weights must be non-negative with a positive sum"));
        }
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return Err(NbvError::InvalidConfig("d_min must be positive"));
        }
        if !(self.standoff_band > 0.0 && self.viewpoint_margin >= 0.0 && self.viewpoint_margin < self.standoff_band) {
            return Err(NbvError::InvalidConfig("viewpoint margin must lie inside the standoff band"));
        }
        if self.n_starts == 0 {
            return Err(NbvError::InvalidConfig("n_starts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbvSolution {
    pub q: JointVector,
    pub pose: Pose,
    pub cost: f64,
    pub standoff: f64,
    pub starts_tried: usize,
    pub feasible: bool,
}

/// `A |p - p_g|^2 + B (droll^2 + dpitch^2)`, plus `B dyaw^2` when yaw is not free.
pub fn nbv_cost(pose: &Pose, goal: &Pose, cfg: &NbvConfig) -> f64 {
    let (r, p, y) = pose.rpy();
    let (gr, gp, gy) = goal.rpy();
    let dr = wrap_angle(r - gr);
    let dp = wrap_angle(p - gp);
    let mut rot = dr * dr + dp * dp;
    if !cfg.yaw_free {
        let dy = wrap_angle(y - gy);
        rot += dy * dy;
    }
    cfg.weight_pos * (pose.position - goal.position).norm_squared() + cfg.weight_rot * rot
}

/// Horizontal unit vector from the target towards the chain base.
fn approach_direction(chain: &ChainSpec, target: &Vector3<f64>) -> Vector3<f64> {
    let mut d = chain.base_pose.position - target;
    d.z = 0.0;
    if d.norm() < 1e-9 {
        -Vector3::x()
    } else {
        d.normalize()
    }
}

fn facing(position: Vector3<f64>, target: &Vector3<f64>, cfg: &NbvConfig) -> Pose {
    let d = target - position;
    let yaw = if d.x.hypot(d.y) < 1e-12 { 0.0 } else { d.y.atan2(d.x) };
    Pose::from_rpy(position, cfg.fixed_roll, cfg.fixed_pitch, yaw)
}

/// Goal viewpoint: on the horizontal line from the target towards the base,
/// `d_min + viewpoint_margin` away, facing the target with the configured roll and pitch.
pub fn viewpoint_goal(chain: &ChainSpec, target: &Vector3<f64>, cfg: &NbvConfig) -> Pose {
    let u = approach_direction(chain, target);
    facing(target + u * (cfg.d_min + cfg.viewpoint_margin), target, cfg)
}

/// Fibonacci-lattice directions on the hemisphere around `axis`.
pub fn hemisphere_directions(axis: &Vector3<f64>, n: usize) -> Vec<Vector3<f64>> {
    let a = axis.normalize();
    let helper = if a.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let e1 = helper.cross(&a).normalize();
    let e2 = a.cross(&e1);
    let golden = PI * (3.0 - 5.0.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let s = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            a * z + (e1 * phi.cos() + e2 * phi.sin()) * s
        })
        .collect()
}

struct Problem<'a> {
    chain: &'a ChainSpec,
    target: Vector3<f64>,
    goal: Pose,
    goal_rpy: (f64, f64, f64),
    cfg: &'a NbvConfig,
}

/// Weight on the standoff hinge rows during descent.
const STANDOFF_PENALTY: f64 = 1e3;

impl Problem<'_> {
    fn rot_rows(&self) -> usize {
        if self.cfg.yaw_free {
            2
        } else {
            3
        }
    }

    fn rows(&self) -> usize {
        3 + self.rot_rows() + 1
    }

    /// View residual followed by a hinge on the standoff band. Without the
    /// last row its squared norm is the view cost.
    fn residual(&self, q: &[f64]) -> DVector<f64> {
        let pose = fk_unchecked(self.chain, q);
        let (r, p, y) = pose.rpy();
        let sa = self.cfg.weight_pos.sqrt();
        let sb = self.cfg.weight_rot.sqrt();
        let dp = pose.position - self.goal.position;
        let mut out = DVector::zeros(self.rows());
        out[0] = sa * dp.x;
        out[1] = sa * dp.y;
        out[2] = sa * dp.z;
        out[3] = sb * wrap_angle(r - self.goal_rpy.0);
        out[4] = sb * wrap_angle(p - self.goal_rpy.1);
        if !self.cfg.yaw_free {
            out[5] = sb * wrap_angle(y - self.goal_rpy.2);
        }
        let d = (pose.position - self.target).norm();
        let lo = self.cfg.d_min + 1e-7;
        let hi = self.cfg.d_min + self.cfg.standoff_band;
        out[self.rows() - 1] = STANDOFF_PENALTY * ((lo - d).max(0.0) + (d - hi).max(0.0));
        out
    }

    fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        let h = 1e-6;
        let m = self.rows();
        let sb = self.cfg.weight_rot.sqrt();
        let mut jac = DMatrix::zeros(m, q.len());
        let mut w = q.to_vec();
        for k in 0..q.len() {
            w[k] = q[k] + h;
            let rp = self.residual(&w);
            w[k] = q[k] - h;
            let rm = self.residual(&w);
            w[k] = q[k];
            for r in 0..m {
                let mut d = rp[r] - rm[r];
                if r >= 3 && r < 3 + self.rot_rows() && sb > 0.0 {
                    d = sb * wrap_angle(d / sb);
                }
                jac[(r, k)] = d / (2.0 * h);
            }
        }
        jac
    }

    fn standoff(&self, q: &[f64]) -> f64 {
        (fk_unchecked(self.chain, q).position - self.target).norm()
    }

    /// Minimum-norm Gauss-Newton steps on the standoff alone, moving the tool
    /// just outside the `d_min` sphere.
    fn project(&self, q: &mut JointVector) {
        let want = self.cfg.d_min + 1e-7;
        let h = 1e-6;
        for _ in 0..10 {
            let d = self.standoff(q);
            if d >= self.cfg.d_min {
                return;
            }
            let mut grad = DVector::zeros(q.len());
            let mut w = q.0.clone();
            for k in 0..q.len() {
                w[k] = q[k] + h;
                let dp = self.standoff(&w);
                w[k] = q[k] - h;
                let dm = self.standoff(&w);
                w[k] = q[k];
                grad[k] = (dp - dm) / (2.0 * h);
            }
            let g2 = grad.norm_squared();
            if g2 < 1e-18 {
                return;
            }
            let s = (want - d) / g2;
            for k in 0..q.len() {
                q[k] += s * grad[k];
            }
            self.chain.clamp(q);
        }
    }

    /// Levenberg-Marquardt on the view residual with the standoff band as a
    /// penalty, then a final projection onto the band.
    fn descend(&self, mut q: JointVector) -> JointVector {
        let n = q.len();
        let mut r = self.residual(&q);
        let mut cost = r.norm_squared();
        let mut mu = 1e-3;
        for _ in 0..self.cfg.max_iters {
            let j = self.jacobian(&q);
            let jtj = j.transpose() * &j;
            let g = j.transpose() * &r;
            if g.amax() < 1e-12 {
                break;
            }
            let mut improved = false;
            for _ in 0..8 {
                let mut a = jtj.clone();
                for d in 0..n {
                    a[(d, d)] += mu * (1.0 + jtj[(d, d)]);
                }
                let Some(ch) = a.cholesky() else {
                    mu *= 10.0;
                    continue;
                };
                let mut dq = -ch.solve(&g);
                let peak = dq.amax();
                if peak > 0.2 {
                    dq *= 0.2 / peak;
                }
                let mut cand = q.clone();
                for k in 0..n {
                    cand[k] += dq[k];
                }
                self.chain.clamp(&mut cand);
                let rc = self.residual(&cand);
                let c = rc.norm_squared();
                if c < cost {
                    let gain = cost - c;
                    q = cand;
                    r = rc;
                    cost = c;
                    mu = (mu / 3.0).max(1e-9);
                    improved = gain > 1e-14 * (1.0 + cost);
                    break;
                }
                mu *= 10.0;
            }
            if !improved {
                break;
            }
        }
        self.project(&mut q);
        q
    }
}

struct Candidate {
    q: JointVector,
    pose: Pose,
    cost: f64,
    standoff: f64,
    free: bool,
    feasible: bool,
}

/// Multi-start viewpoint search.
///
/// Start `i` aims at a Fibonacci direction on the hemisphere facing the chain
/// base, is solved with damped least squares, then refined on the weighted
/// cost. The lowest-cost feasible candidate wins, ties going to the lower
/// index. Without a feasible candidate the lowest-cost collision-free one is
/// returned with `feasible = false`.
pub fn plan_nbv(chain: &ChainSpec, scene: &CollisionScene, target: &Pose, cfg: &NbvConfig) -> Result<NbvSolution, NbvError> {
    cfg.validate()?;
    if !target.is_finite() {
        return Err(NbvError::NonFiniteTarget);
    }
    let t = target.position;
    let goal = viewpoint_goal(chain, &t, cfg);
    let problem = Problem {
        chain,
        target: t,
        goal,
        goal_rpy: goal.rpy(),
        cfg,
    };
    let dirs = hemisphere_directions(&approach_direction(chain, &t), cfg.n_starts);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mid = chain.mid_config();
    let mut candidates = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let view = facing(t + d * (cfg.d_min + cfg.viewpoint_margin), &t, cfg);
        let mut best = ik_solve(chain, &view, &mid, PoseMask::FULL, &cfg.ik).map_err(CollisionError::from)?;
        let random_seed: Vec<f64> = chain
            .joints
            .iter()
            .map(|j| rng.random_range(j.limit_lo..=j.limit_hi))
            .collect();
        if !best.converged {
            let retry = ik_solve(chain, &view, &random_seed, PoseMask::FULL, &cfg.ik).map_err(CollisionError::from)?;
            if retry.residual_pos + retry.residual_rot < best.residual_pos + best.residual_rot {
                best = retry;
            }
        }
        let q = problem.descend(best.q);
        let pose = fk_unchecked(chain, &q);
        let standoff = (pose.position - t).norm();
        let free = !chains_in_collision(scene, &[(chain, &q)])?.is_collision();
        let feasible = free
            && chain.is_admissible(&q)
            && standoff >= cfg.d_min - 1e-9
            && standoff <= cfg.d_min + cfg.standoff_band;
        candidates.push(Candidate {
            cost: nbv_cost(&pose, &goal, cfg),
            q,
            pose,
            standoff,
            free,
            feasible,
        });
    }
    let pick = |filter: &dyn Fn(&Candidate) -> bool| {
        let mut best: Option<usize> = None;
        for (i, c) in candidates.iter().enumerate() {
            if filter(c) && best.is_none_or(|b| c.cost < candidates[b].cost) {
                best = Some(i);
            }
        }
        best
    };
    let idx = pick(&|c| c.feasible)
        .or_else(|| pick(&|c| c.free))
        .or_else(|| pick(&|_| true))
        .unwrap_or(0);
    let c = candidates.swap_remove(idx);
    Ok(NbvSolution {
        q: c.q,
        pose: c.pose,
        cost: c.cost,
        standoff: c.standoff,
        starts_tried: dirs.len(),
        feasible: c.feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{grid_from_points, OccupancyGrid};
    use crate::robot::NominalRobot;

    #[test]
    fn cost_is_zero_at_goal() {
        let g = Pose::from_rpy(Vector3::new(1.0, 2.0, 3.0), 0.1, -0.2, 0.3);
        assert_eq!(nbv_cost(&g, &g, &NbvConfig::default()), 0.0);
    }

    #[test]
    fn cost_position_only() {
        let cfg = NbvConfig {
            weight_rot: 0.0,
            ..NbvConfig::default()
        };
        let g = Pose::identity();
        let p = Pose::from_translation(0.1, 0.0, 0.0);
        assert!((nbv_cost(&p, &g, &cfg) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn cost_wraps_roll() {
        let cfg = NbvConfig::default();
        let g = Pose::identity();
        let eps = 1e-3;
        let a = Pose::from_rpy(Vector3::zeros(), PI - eps, 0.0, 0.0);
        let b = Pose::from_rpy(Vector3::zeros(), -PI + eps, 0.0, 0.0);
        assert!((nbv_cost(&a, &g, &cfg) - nbv_cost(&b, &g, &cfg)).abs() < 1e-9);
    }

    #[test]
    fn yaw_counts_only_when_not_free() {
        let g = Pose::identity();
        let p = Pose::from_rpy(Vector3::zeros(), 0.0, 0.0, 0.5);
        assert!(nbv_cost(&p, &g, &NbvConfig::default()) < 1e-20);
        let cfg = NbvConfig {
            yaw_free: false,
            ..NbvConfig::default()
        };
        assert!((nbv_cost(&p, &g, &cfg) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn directions_cover_hemisphere() {
        let axis = Vector3::new(-1.0, 0.0, 0.0);
        let d = hemisphere_directions(&axis, 64);
        assert_eq!(d.len(), 64);
        for v in &d {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!(v.dot(&axis) > 0.0);
        }
    }

    #[test]
    fn nominal_view_is_feasible() {
        let robot = NominalRobot::load();
        let target = Pose::from_translation(1.3, 0.0, 0.8);
        let cfg = NbvConfig {
            n_starts: 8,
            ..NbvConfig::default()
        };
        let sol = plan_nbv(&robot.spot, &CollisionScene::empty(), &target, &cfg).unwrap();
        assert!(sol.feasible, "{sol:?}");
        assert!(sol.standoff >= cfg.d_min && sol.standoff <= cfg.d_min + 0.05);
        let (r, p, _) = sol.pose.rpy();
        assert!(r.abs() <= 0.05 && p.abs() <= 0.05);
    }

    #[test]
    fn far_target_is_infeasible() {
        let robot = NominalRobot::load();
        let target = Pose::from_translation(3.0, 0.0, 0.8);
        let cfg = NbvConfig {
            n_starts: 4,
            ..NbvConfig::default()
        };
        let sol = plan_nbv(&robot.spot, &CollisionScene::empty(), &target, &cfg).unwrap();
        assert!(!sol.feasible);
    }

    #[test]
    fn enclosed_target_is_infeasible() {
        let robot = NominalRobot::load();
        let t = Vector3::new(1.3, 0.0, 0.8);
        let mut shell = Vec::new();
        let n = 4000;
        for d in hemisphere_directions(&Vector3::x(), n).into_iter().chain(hemisphere_directions(&-Vector3::x(), n)) {
            for r in [0.44, 0.47, 0.50] {
                shell.push(t + d * r);
            }
        }
        let grid: OccupancyGrid = grid_from_points(&shell, 0.02, 0.02).unwrap();
        let scene = CollisionScene::new(grid, alloc::vec![], alloc::vec![]).unwrap();
        let cfg = NbvConfig {
            n_starts: 8,
            ..NbvConfig::default()
        };
        let sol = plan_nbv(&robot.spot, &scene, &Pose::new(t, Default::default()), &cfg).unwrap();
        assert!(!sol.feasible);
    }

    #[test]
    fn invalid_config() {
        let cfg = NbvConfig {
            weight_pos: 0.0,
            weight_rot: 0.0,
            ..NbvConfig::default()
        };
        assert!(matches!(
            plan_nbv(&NominalRobot::load().spot, &CollisionScene::empty(), &Pose::identity(), &cfg),
            Err(NbvError::InvalidConfig(_))
        ));
    }
}
