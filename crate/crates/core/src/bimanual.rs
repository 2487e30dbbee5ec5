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
//! Minimum-displacement reaching for the two small arms and the fixed
//! hold-then-twist harvest sequence.
//!
//! Goals are positions only. The right gripper goes to the fruit centre and the
//! left pincher to a point offset from it in the fruit frame (the peduncle).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collision::{config_in_collision, CollisionError, CollisionScene, DEFAULT_PATH_STEP};
use crate::kinematics::{fk_unchecked, ik_solve, position_jacobian, ChainSpec, IkConfig, JointVector, KinError, PoseMask};
use crate::pose::Pose;
use crate::robot::{NominalRobot, LEFT, RIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Extend,
    LeftReach,
    LeftHold,
    RightReach,
    Twist,
    Retract,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Extend,
        Phase::LeftReach,
        Phase::LeftHold,
        Phase::RightReach,
        Phase::Twist,
        Phase::Retract,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Extend => "extend",
            Phase::LeftReach => "left-reach",
            Phase::LeftHold => "left-hold",
            Phase::RightReach => "right-reach",
            Phase::Twist => "twist",
            Phase::Retract => "retract",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReachFailure {
    Unreachable,
    NoCollisionFreeSolution,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BimanualError {
    #[error("no start reaches the goal within tolerance")]
    Unreachable,
    #[error("the goal is reachable but every candidate collides")]
    NoCollisionFreeSolution,
    #[error("phase {phase} infeasible: {cause:?}")]
    PhaseInfeasible { phase: Phase, cause: ReachFailure },
    #[error("joint vectors have {a} and {b} entries")]
    DimensionMismatch { a: usize, b: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

impl From<KinError> for BimanualError {
    fn from(e: KinError) -> Self {
        BimanualError::Collision(CollisionError::Kinematics(e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachConfig {
    /// Allowed distance between tool and goal (m).
    pub tol: f64,
    /// Random starts in addition to `q0`.
    pub n_starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Joint step used when checking the move from `q0` (rad).
    pub path_step: f64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            tol: 0.005,
            n_starts: 32,
            seed: 0,
            max_iters: 100,
            path_step: DEFAULT_PATH_STEP,
        }
    }
}

/// One arm's reach: stay as close to `q0` as possible while putting the tool
/// within `cfg.tol` of `goal`. Chains listed in `fixed` are held still during
/// collision checks.
#[derive(Clone, Debug)]
pub struct ReachProblem<'a> {
    pub chain: &'a str,
    pub q0: JointVector,
    pub goal: Vector3<f64>,
    pub scene: &'a CollisionScene,
    pub fixed: Vec<(String, JointVector)>,
    pub cfg: ReachConfig,
}

fn tool_residual(chain: &ChainSpec, q: &[f64], goal: &Vector3<f64>) -> Vector3<f64> {
    fk_unchecked(chain, q).position - goal
}

/// Minimiser of `|d + delta|^2` subject to `|J delta + c| <= tau`.
fn ball_step(j: &DMatrix<f64>, c: &DVector<f64>, d: &DVector<f64>, tau: f64) -> DVector<f64> {
    let n = d.len();
    let free = -d;
    if (j * &free + c).norm() <= tau {
        return free;
    }
    let jtj = j.transpose() * j;
    let jtc = j.transpose() * c;
    let solve = |mu: f64| -> DVector<f64> {
        let a = DMatrix::identity(n, n) + &jtj * mu;
        let rhs = -(d + &jtc * mu);
        a.cholesky().map(|ch| ch.solve(&rhs)).unwrap_or_else(|| DVector::zeros(n))
    };
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    let at_hi = solve(10f64.powf(hi));
    if (j * &at_hi + c).norm() > tau {
        return at_hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let s = solve(10f64.powf(mid));
        if (j * &s + c).norm() > tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve(10f64.powf(hi))
}

struct Refiner<'a> {
    chain: &'a ChainSpec,
    goal: Vector3<f64>,
    q0: &'a [f64],
    tol: f64,
    max_iters: usize,
}

impl Refiner<'_> {
    fn cost(&self, q: &[f64]) -> f64 {
        JointVector(q.to_vec()).sq_distance(self.q0)
    }

    fn residual(&self, q: &[f64]) -> f64 {
        tool_residual(self.chain, q, &self.goal).norm()
    }

    fn retract(&self, q: &JointVector) -> JointVector {
        let cfg = IkConfig {
            tol_pos: 0.5 * self.tol,
            max_iters: 30,
            damping: 1e-3,
            ..IkConfig::default()
        };
        match ik_solve(self.chain, &Pose::new(self.goal, Default::default()), q, PoseMask::POSITION, &cfg) {
            Ok(out) => out.q,
            Err(_) => q.clone(),
        }
    }

    /// Damped least-squares position steps that leave joint `pin` where it is.
    fn project_pinned(&self, mut q: JointVector, pin: usize) -> JointVector {
        for _ in 0..50 {
            let c = tool_residual(self.chain, &q, &self.goal);
            if c.norm() <= 0.2 * self.tol {
                break;
            }
            let mut j = position_jacobian(self.chain, &q, 1e-6);
            j.column_mut(pin).fill(0.0);
            let jjt = &j * j.transpose() + DMatrix::identity(3, 3) * 1e-4;
            let Some(ch) = jjt.cholesky() else { break };
            let dq = j.transpose() * ch.solve(&DVector::from_column_slice((-c).as_slice()));
            let peak = dq.amax();
            let scale = if peak > 0.3 { 0.3 / peak } else { 1.0 };
            for k in 0..q.len() {
                q[k] += dq[k] * scale;
            }
            self.chain.clamp(&mut q);
        }
        q
    }

    /// Ball step over the joints not pinned at a limit. A joint is pinned when
    /// it sits on a limit and the step would push it further out.
    fn bounded_step(&self, q: &[f64], j: &DMatrix<f64>, c: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let n = q.len();
        let mut pinned = alloc::vec![false; n];
        loop {
            let free: Vec<usize> = (0..n).filter(|&k| !pinned[k]).collect();
            let mut step = DVector::zeros(n);
            if free.is_empty() {
                return step;
            }
            let jf = j.select_columns(free.iter());
            let df = DVector::from_iterator(free.len(), free.iter().map(|&k| d[k]));
            let sf = ball_step(&jf, c, &df, 0.9 * self.tol);
            for (i, &k) in free.iter().enumerate() {
                step[k] = sf[i];
            }
            let mut changed = false;
            for &k in &free {
                let jt = &self.chain.joints[k];
                let at_lo = q[k] <= jt.limit_lo + 1e-12 && step[k] < 0.0;
                let at_hi = q[k] >= jt.limit_hi - 1e-12 && step[k] > 0.0;
                if at_lo || at_hi {
                    pinned[k] = true;
                    changed = true;
                }
            }
            if !changed {
                return step;
            }
        }
    }

    /// Linearised ball-constrained steps, each followed by a pull back onto the
    /// tolerance ball. Only cost-decreasing feasible steps are accepted.
    fn refine(&self, mut q: JointVector) -> JointVector {
        let n = q.len();
        let d0 = DVector::from_column_slice(self.q0);
        let mut cost = self.cost(&q);
        for _ in 0..self.max_iters {
            let j = position_jacobian(self.chain, &q, 1e-6);
            let c = DVector::from_column_slice(tool_residual(self.chain, &q, &self.goal).as_slice());
            let d = DVector::from_column_slice(&q) - &d0;
            let mut step = self.bounded_step(&q, &j, &c, &d);
            let peak = step.amax();
            if peak < 1e-12 {
                break;
            }
            if peak > 0.3 {
                step *= 0.3 / peak;
            }
            let mut accepted = false;
            for _ in 0..10 {
                let mut cand = q.clone();
                for k in 0..n {
                    cand[k] += step[k];
                }
                self.chain.clamp(&mut cand);
                if self.residual(&cand) > self.tol {
                    cand = self.retract(&cand);
                }
                let cc = self.cost(&cand);
                if self.residual(&cand) <= self.tol && cc < cost {
                    accepted = cost - cc > 1e-15;
                    q = cand;
                    cost = cc;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        q
    }
}

/// Minimum-displacement reach by multi-start projected descent.
///
/// Start 0 is `q0`, then `q0` with one joint moved to either limit, then
/// `n_starts` uniform admissible samples. Each start is projected onto the
/// goal (limit starts keep their moved joint in place) and refined. A candidate is kept
/// when its tool lies within tolerance and both the final configuration and
/// the straight joint-space move from `q0` are collision-free. The smallest
/// `|q - q0|^2` wins with ties going to the lower start index.
pub fn solve_min_displacement_reach(p: &ReachProblem) -> Result<JointVector, BimanualError> {
    let chain = p.scene.chain(p.chain)?;
    chain.check_dims(&p.q0)?;
    if !chain.is_admissible(&p.q0) {
        return Err(BimanualError::InvalidArgument("q0 outside joint limits"));
    }
    if !(p.cfg.tol > 0.0) {
        return Err(BimanualError::InvalidArgument("tolerance must be positive"));
    }
    let fixed: Vec<(&str, &[f64])> = p.fixed.iter().map(|(n, q)| (n.as_str(), q.as_slice())).collect();
    let is_free = |q: &[f64]| -> Result<bool, BimanualError> {
        let mut a = fixed.clone();
        a.push((p.chain, q));
        Ok(!config_in_collision(p.scene, &a)?.is_collision())
    };
    let path_free = |q: &[f64]| -> Result<bool, BimanualError> {
        Ok(!crate::collision::path_in_collision_with(p.scene, p.chain, &p.q0, q, p.cfg.path_step, &fixed)?)
    };

    let refiner = Refiner {
        chain,
        goal: p.goal,
        q0: &p.q0,
        tol: p.cfg.tol,
        max_iters: p.cfg.max_iters,
    };
    if refiner.residual(&p.q0) <= p.cfg.tol && is_free(&p.q0)? {
        return Ok(p.q0.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.cfg.seed);
    // (start, joint held on its limit during projection)
    let mut starts: Vec<(JointVector, Option<usize>)> = alloc::vec![(p.q0.clone(), None)];
    // optima near the workspace boundary often have one joint on a limit
    for (k, j) in chain.joints.iter().enumerate() {
        for v in [j.limit_lo, j.limit_hi] {
            let mut q = p.q0.clone();
            q[k] = v;
            starts.push((q, Some(k)));
        }
    }
    for _ in 0..p.cfg.n_starts {
        let q = chain.joints.iter().map(|j| rng.random_range(j.limit_lo..=j.limit_hi)).collect();
        starts.push((JointVector(q), None));
    }
    let ik = IkConfig {
        tol_pos: 0.2 * p.cfg.tol,
        ..IkConfig::default()
    };
    let target = Pose::new(p.goal, Default::default());
    let mut reached = false;
    let mut best: Option<(f64, JointVector)> = None;
    for (s, pin) in &starts {
        let projected = match pin {
            Some(k) => refiner.project_pinned(s.clone(), *k),
            None => ik_solve(chain, &target, s, PoseMask::POSITION, &ik)?.q,
        };
        if refiner.residual(&projected) > p.cfg.tol {
            continue;
        }
        let q = refiner.refine(projected);
        if refiner.residual(&q) > p.cfg.tol || !chain.is_admissible(&q) {
            continue;
        }
        reached = true;
        let cost = refiner.cost(&q);
        if best.as_ref().is_some_and(|(b, _)| cost >= *b) {
            continue;
        }
        if is_free(&q)? && path_free(&q)? {
            best = Some((cost, q));
        }
    }
    match best {
        Some((_, q)) => Ok(q),
        None if reached => Err(BimanualError::NoCollisionFreeSolution),
        None => Err(BimanualError::Unreachable),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub q: JointVector,
    /// End-effector state: pincher closure in `[0, 1]` on the left arm,
    /// rotary gripper angle (rad) on the right arm.
    #[serde(default)]
    pub ee: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub chain: String,
    pub phase: Phase,
    pub waypoints: Vec<Waypoint>,
}

impl TrajectorySegment {
    pub fn start_time(&self) -> f64 {
        self.waypoints.first().map_or(0.0, |w| w.t)
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn final_q(&self) -> &JointVector {
        &self.waypoints.last().expect("segments are never empty").q
    }

    /// Linear interpolation of joints and end-effector state at time `t`, clamped to the ends.
    pub fn sample(&self, t: f64) -> (JointVector, f64) {
        let w = &self.waypoints;
        if t <= w[0].t {
            return (w[0].q.clone(), w[0].ee);
        }
        let i = w.partition_point(|p| p.t <= t);
        if i >= w.len() {
            let l = &w[w.len() - 1];
            return (l.q.clone(), l.ee);
        }
        let (a, b) = (&w[i - 1], &w[i]);
        let s = (t - a.t) / (b.t - a.t);
        (a.q.lerp(&b.q, s), a.ee + s * (b.ee - a.ee))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseDurations {
    pub extend: f64,
    pub left_reach: f64,
    pub hold: f64,
    pub right_reach: f64,
    pub twist: f64,
    pub retract: f64,
}

impl Default for PhaseDurations {
    fn default() -> Self {
        Self {
            extend: 2.0,
            left_reach: 2.0,
            hold: 0.5,
            right_reach: 2.0,
            twist: 1.0,
            retract: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestSequenceSpec {
    /// Predefined waypoints after the starting configuration; empty means stay put.
    pub extend_left: Vec<JointVector>,
    pub extend_right: Vec<JointVector>,
    /// Peduncle point in the fruit frame (m).
    pub peduncle_offset: [f64; 3],
    pub hold_radius: f64,
    pub grasp_radius: f64,
    pub twist_angle: f64,
    pub durations: PhaseDurations,
    pub interp_step: f64,
    pub reach: ReachConfig,
}

impl Default for HarvestSequenceSpec {
    fn default() -> Self {
        Self {
            extend_left: Vec::new(),
            extend_right: Vec::new(),
            peduncle_offset: [0.0, 0.0, 0.10],
            hold_radius: 0.02,
            grasp_radius: 0.025,
            twist_angle: core::f64::consts::FRAC_PI_2,
            durations: PhaseDurations::default(),
            interp_step: DEFAULT_PATH_STEP,
            reach: ReachConfig::default(),
        }
    }
}

impl HarvestSequenceSpec {
    /// Defaults with the robot's horizontal extension as the predefined first phase.
    pub fn nominal(robot: &NominalRobot) -> Self {
        Self {
            extend_left: alloc::vec![robot.left_extended.clone()],
            extend_right: alloc::vec![robot.right_extended.clone()],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BimanualError> {
        if !(self.twist_angle > 0.0) {
            return Err(BimanualError::InvalidArgument("twist_angle must be positive"));
        }
        if !(self.hold_radius > 0.0 && self.grasp_radius > 0.0) {
            return Err(BimanualError::InvalidArgument("radii must be positive"));
        }
        if !(self.interp_step > 0.0 && self.interp_step <= 0.1) {
            return Err(BimanualError::InvalidArgument("interp_step must lie in (0, 0.1]"));
        }
        let d = &self.durations;
        if [d.extend, d.left_reach, d.hold, d.right_reach, d.twist, d.retract]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(BimanualError::InvalidArgument("phase durations must be positive"));
        }
        Ok(())
    }
}

/// Arm goals from the fruit pose: the right gripper goes to the fruit centre,
/// the left pincher to the rotated peduncle offset.
pub fn task_space_transform(fruit_pose: &Pose, spec: &HarvestSequenceSpec) -> (Vector3<f64>, Vector3<f64>) {
    let right = fruit_pose.position;
    let left = fruit_pose.transform_point(&Vector3::from(spec.peduncle_offset));
    (left, right)
}

/// Straight joint-space move sampled uniformly in time, endpoints exact.
///
/// Uses `ceil(|dq|_inf / step) + 1` waypoints and never fewer than two.
pub fn interpolate_joint_path(q_from: &[f64], q_to: &[f64], step: f64, duration: f64) -> Result<Vec<Waypoint>, BimanualError> {
    if q_from.len() != q_to.len() {
        return Err(BimanualError::DimensionMismatch {
            a: q_from.len(),
            b: q_to.len(),
        });
    }
    if !(step > 0.0) || !(duration > 0.0) {
        return Err(BimanualError::InvalidArgument("step and duration must be positive"));
    }
    let n = crate::collision::waypoint_count(q_from, q_to, step).max(2);
    let from = JointVector(q_from.to_vec());
    Ok((0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            let q = if i + 1 == n { JointVector(q_to.to_vec()) } else { from.lerp(q_to, s) };
            Waypoint {
                t: if i + 1 == n { duration } else { duration * s },
                q,
                ee: 0.0,
            }
        })
        .collect())
}

/// Waypoints through `points` starting at `t0`, with leg durations
/// proportional to their joint-space length.
fn polyline(points: &[&[f64]], t0: f64, duration: f64, step: f64) -> Result<Vec<Waypoint>, BimanualError> {
    let lens: Vec<f64> = points
        .windows(2)
        .map(|w| JointVector(w[0].to_vec()).inf_distance(w[1]))
        .collect();
    let total: f64 = lens.iter().sum();
    let moving: Vec<usize> = (0..lens.len()).filter(|&i| lens[i] > 0.0).collect();
    if moving.is_empty() {
        return interpolate_joint_path(points[0], points[0], step, duration).map(|w| shift(w, t0));
    }
    let mut out: Vec<Waypoint> = Vec::new();
    let mut t = t0;
    for (k, &i) in moving.iter().enumerate() {
        let dt = if k + 1 == moving.len() { t0 + duration - t } else { duration * lens[i] / total };
        let leg = shift(interpolate_joint_path(points[i], points[i + 1], step, dt)?, t);
        let skip = usize::from(!out.is_empty());
        out.extend(leg.into_iter().skip(skip));
        t += dt;
    }
    Ok(out)
}

fn shift(mut w: Vec<Waypoint>, t0: f64) -> Vec<Waypoint> {
    for p in &mut w {
        p.t += t0;
    }
    w
}

fn hold(q: &JointVector, t0: f64, duration: f64, ee_from: f64, ee_to: f64, steps: usize) -> Vec<Waypoint> {
    (0..=steps)
        .map(|i| {
            let s = i as f64 / steps as f64;
            Waypoint {
                t: t0 + duration * s,
                q: q.clone(),
                ee: ee_from + s * (ee_to - ee_from),
            }
        })
        .collect()
}

/// Checks every waypoint time of every track, interpolating the other tracks
/// at that time, with `fixed` chains held still.
pub fn tracks_in_collision(
    scene: &CollisionScene,
    tracks: &[&TrajectorySegment],
    fixed: &[(&str, &[f64])],
) -> Result<bool, BimanualError> {
    let mut times: Vec<f64> = tracks.iter().flat_map(|s| s.waypoints.iter().map(|w| w.t)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for t in times {
        let qs: Vec<JointVector> = tracks.iter().map(|s| s.sample(t).0).collect();
        let mut a: Vec<(&str, &[f64])> = fixed.to_vec();
        for (s, q) in tracks.iter().zip(&qs) {
            a.push((s.chain.as_str(), q.as_slice()));
        }
        if config_in_collision(scene, &a)?.is_collision() {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarvestPlan {
    pub segments: Vec<TrajectorySegment>,
    pub left_goal: Vector3<f64>,
    pub right_goal: Vector3<f64>,
}

impl HarvestPlan {
    pub fn phase_interval(&self, phase: Phase) -> Option<(f64, f64)> {
        let mut it = self.segments.iter().filter(|s| s.phase == phase);
        let first = it.next()?;
        let (mut a, mut b) = (first.start_time(), first.end_time());
        for s in it {
            a = a.min(s.start_time());
            b = b.max(s.end_time());
        }
        Some((a, b))
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(TrajectorySegment::end_time).fold(0.0, f64::max)
    }

    /// Joint and end-effector state of `chain` at time `t` (last state before `t`
    /// when no segment of the chain covers it).
    pub fn state_at(&self, chain: &str, t: f64) -> Option<(JointVector, f64)> {
        let mut last = None;
        for s in self.segments.iter().filter(|s| s.chain == chain) {
            if s.start_time() <= t {
                last = Some(s.sample(t));
            }
        }
        last
    }
}

/// Builds the six timed segments groups: extend (both), left reach, left hold,
/// right reach, twist, retract (both). The scene must hold chains named
/// `left` and `right`.
pub fn plan_harvest_sequence(
    fruit_pose: &Pose,
    q0_left: &[f64],
    q0_right: &[f64],
    scene: &CollisionScene,
    spec: &HarvestSequenceSpec,
) -> Result<HarvestPlan, BimanualError> {
    spec.validate()?;
    if !fruit_pose.is_finite() {
        return Err(BimanualError::InvalidArgument("fruit pose is not finite"));
    }
    let (left_goal, right_goal) = task_space_transform(fruit_pose, spec);
    let d = &spec.durations;
    let step = spec.interp_step;
    let fail = |phase, cause| BimanualError::PhaseInfeasible { phase, cause };

    let mut left_path: Vec<&[f64]> = alloc::vec![q0_left];
    left_path.extend(spec.extend_left.iter().map(|q| q.as_slice()));
    let mut right_path: Vec<&[f64]> = alloc::vec![q0_right];
    right_path.extend(spec.extend_right.iter().map(|q| q.as_slice()));
    for (chain, path) in [(LEFT, &left_path), (RIGHT, &right_path)] {
        let c = scene.chain(chain)?;
        for q in path.iter() {
            c.check_dims(q)?;
        }
    }

    let mut t = 0.0;
    let ext_l = TrajectorySegment {
        chain: LEFT.into(),
        phase: Phase::Extend,
        waypoints: polyline(&left_path, t, d.extend, step)?,
    };
    let ext_r = TrajectorySegment {
        chain: RIGHT.into(),
        phase: Phase::Extend,
        waypoints: polyline(&right_path, t, d.extend, step)?,
    };
    if tracks_in_collision(scene, &[&ext_l, &ext_r], &[])? {
        return Err(fail(Phase::Extend, ReachFailure::NoCollisionFreeSolution));
    }
    t += d.extend;
    let ql_ext = ext_l.final_q().clone();
    let qr_ext = ext_r.final_q().clone();

    let to_phase = |e: BimanualError, phase| match e {
        BimanualError::Unreachable => fail(phase, ReachFailure::Unreachable),
        BimanualError::NoCollisionFreeSolution => fail(phase, ReachFailure::NoCollisionFreeSolution),
        other => other,
    };
    let ql = solve_min_displacement_reach(&ReachProblem {
        chain: LEFT,
        q0: ql_ext.clone(),
        goal: left_goal,
        scene,
        fixed: alloc::vec![(RIGHT.into(), qr_ext.clone())],
        cfg: spec.reach.clone(),
    })
    .map_err(|e| to_phase(e, Phase::LeftReach))?;
    let reach_l = TrajectorySegment {
        chain: LEFT.into(),
        phase: Phase::LeftReach,
        waypoints: shift(interpolate_joint_path(&ql_ext, &ql, step, d.left_reach)?, t),
    };
    t += d.left_reach;
    let hold_l = TrajectorySegment {
        chain: LEFT.into(),
        phase: Phase::LeftHold,
        waypoints: hold(&ql, t, d.hold, 0.0, 1.0, 5),
    };
    t += d.hold;

    let qr = solve_min_displacement_reach(&ReachProblem {
        chain: RIGHT,
        q0: qr_ext.clone(),
        goal: right_goal,
        scene,
        fixed: alloc::vec![(LEFT.into(), ql.clone())],
        cfg: ReachConfig {
            seed: spec.reach.seed.wrapping_add(1),
            ..spec.reach.clone()
        },
    })
    .map_err(|e| to_phase(e, Phase::RightReach))?;
    let reach_r = TrajectorySegment {
        chain: RIGHT.into(),
        phase: Phase::RightReach,
        waypoints: shift(interpolate_joint_path(&qr_ext, &qr, step, d.right_reach)?, t),
    };
    t += d.right_reach;
    let twist = TrajectorySegment {
        chain: RIGHT.into(),
        phase: Phase::Twist,
        waypoints: hold(&qr, t, d.twist, 0.0, spec.twist_angle, 10),
    };
    t += d.twist;

    let mut back_l: Vec<&[f64]> = alloc::vec![ql.as_slice()];
    back_l.extend(left_path.iter().rev());
    let mut back_r: Vec<&[f64]> = alloc::vec![qr.as_slice()];
    back_r.extend(right_path.iter().rev());
    let ret_l = TrajectorySegment {
        chain: LEFT.into(),
        phase: Phase::Retract,
        waypoints: polyline(&back_l, t, d.retract, step)?,
    };
    let ret_r = TrajectorySegment {
        chain: RIGHT.into(),
        phase: Phase::Retract,
        waypoints: polyline(&back_r, t, d.retract, step)?,
    };
    if tracks_in_collision(scene, &[&ret_l, &ret_r], &[])? {
        return Err(fail(Phase::Retract, ReachFailure::NoCollisionFreeSolution));
    }

    Ok(HarvestPlan {
        segments: alloc::vec![ext_l, ext_r, reach_l, hold_l, reach_r, twist, ret_l, ret_r],
        left_goal,
        right_goal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{grid_from_points, OccupancyGrid};
    use crate::kinematics::test_chains::planar;
    use core::f64::consts::PI;

    fn planar_scene() -> CollisionScene {
        let mut c = planar(&[0.3, 0.25, 0.2]);
        c.name = "p3".into();
        CollisionScene::new(OccupancyGrid::empty(), alloc::vec![c], alloc::vec![]).unwrap()
    }

    fn problem<'a>(scene: &'a CollisionScene, q0: &[f64], goal: Vector3<f64>) -> ReachProblem<'a> {
        ReachProblem {
            chain: "p3",
            q0: JointVector(q0.to_vec()),
            goal,
            scene,
            fixed: alloc::vec![],
            cfg: ReachConfig::default(),
        }
    }

    #[test]
    fn offset_follows_fruit_rotation() {
        let spec = HarvestSequenceSpec::default();
        let c = Vector3::new(1.0, 0.5, 0.8);
        let (l, r) = task_space_transform(&Pose::new(c, Default::default()), &spec);
        assert_eq!(r, c);
        assert!((l - (c + Vector3::new(0.0, 0.0, 0.1))).norm() < 1e-15);
        let rolled = Pose::from_rpy(c, PI, 0.0, 0.0);
        let (l, _) = task_space_transform(&rolled, &spec);
        assert!((l - (c - Vector3::new(0.0, 0.0, 0.1))).norm() < 1e-12);
        let zero = HarvestSequenceSpec {
            peduncle_offset: [0.0; 3],
            ..spec
        };
        let (l, r) = task_space_transform(&rolled, &zero);
        assert_eq!(l, r);
    }

    #[test]
    fn feasible_start_is_returned_unchanged() {
        let scene = planar_scene();
        let q0 = [0.3, -0.2, 0.1];
        let p = fk_unchecked(scene.chain("p3").unwrap(), &q0).position + Vector3::new(0.002, 0.0, 0.0);
        let q = solve_min_displacement_reach(&problem(&scene, &q0, p)).unwrap();
        assert_eq!(q.0, q0.to_vec());
    }

    #[test]
    fn beyond_reach_is_unreachable() {
        let scene = planar_scene();
        let r = solve_min_displacement_reach(&problem(&scene, &[0.0; 3], Vector3::new(0.9, 0.0, 0.0)));
        assert_eq!(r, Err(BimanualError::Unreachable));
    }

    #[test]
    fn solution_meets_constraints() {
        let scene = planar_scene();
        let goal = Vector3::new(0.2, 0.4, 0.0);
        let q0 = [0.0, 0.0, 0.0];
        let q = solve_min_displacement_reach(&problem(&scene, &q0, goal)).unwrap();
        let c = scene.chain("p3").unwrap();
        assert!(c.is_admissible(&q));
        assert!((fk_unchecked(c, &q).position - goal).norm() <= 0.005);
    }

    #[test]
    fn ball_step_is_unconstrained_when_target_inside() {
        let j = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let c = DVector::from_vec(alloc::vec![0.0]);
        let d = DVector::from_vec(alloc::vec![0.0, 1.0]);
        let s = ball_step(&j, &c, &d, 0.1);
        assert_eq!(s, DVector::from_vec(alloc::vec![0.0, -1.0]));
        // moving x by -1 would break |x + c| <= 0.1, so the step stops at the boundary
        let d = DVector::from_vec(alloc::vec![1.0, 0.0]);
        let s = ball_step(&j, &c, &d, 0.1);
        assert!((s[0] + 0.1).abs() < 1e-6, "{s}");
    }

    #[test]
    fn interpolation_counts() {
        let w = interpolate_joint_path(&[0.1, 0.2], &[0.1, 0.2], 0.05, 2.0).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!((w[0].t, w[1].t), (0.0, 2.0));
        let w = interpolate_joint_path(&[0.0, 0.0], &[0.5, -0.25], 0.05, 1.0).unwrap();
        assert_eq!(w.len(), 11);
        assert_eq!(w[10].q.0, alloc::vec![0.5, -0.25]);
        assert!(matches!(
            interpolate_joint_path(&[0.0], &[0.0, 1.0], 0.05, 1.0),
            Err(BimanualError::DimensionMismatch { .. })
        ));
    }

    fn nominal_setup() -> (NominalRobot, CollisionScene, Pose, HarvestSequenceSpec) {
        let robot = NominalRobot::load();
        let spot_q = JointVector(alloc::vec![0.0, -0.6, 0.0, 1.4, 0.0, -0.8]);
        let scene = robot.arm_scene(OccupancyGrid::empty(), &spot_q).unwrap();
        let mount = robot.mount_pose(&spot_q);
        let fruit = Pose::new(mount.transform_point(&Vector3::new(0.46, 0.0, 0.0)), Default::default());
        let spec = HarvestSequenceSpec {
            reach: ReachConfig {
                n_starts: 8,
                ..ReachConfig::default()
            },
            ..HarvestSequenceSpec::nominal(&robot)
        };
        (robot, scene, fruit, spec)
    }

    #[test]
    fn nominal_sequence_order() {
        let (robot, scene, fruit, spec) = nominal_setup();
        let plan = plan_harvest_sequence(&fruit, &robot.left_stowed, &robot.right_stowed, &scene, &spec).unwrap();
        let mut last_end = 0.0;
        for ph in Phase::ALL {
            let (a, b) = plan.phase_interval(ph).unwrap();
            assert!(a >= last_end - 1e-12 && b > a, "{ph}");
            last_end = b;
        }
        assert!(plan.phase_interval(Phase::LeftHold).unwrap().1 <= plan.phase_interval(Phase::Twist).unwrap().0);
        for s in &plan.segments {
            for w in s.waypoints.windows(2) {
                assert!(w[1].t > w[0].t);
                assert!(w[0].q.inf_distance(&w[1].q) <= spec.interp_step + 1e-12);
            }
        }
        assert_eq!(plan.state_at(LEFT, plan.duration()).unwrap().0, robot.left_stowed);
        assert_eq!(plan.state_at(RIGHT, plan.duration()).unwrap().0, robot.right_stowed);
    }

    #[test]
    fn coincident_goals_still_plan() {
        let (robot, scene, fruit, mut spec) = nominal_setup();
        spec.peduncle_offset = [0.0; 3];
        // both tools end on the same point, so arm-arm pairs are left out
        let scene = CollisionScene::new(scene.grid.clone(), scene.chains.clone(), alloc::vec![]).unwrap();
        let plan = plan_harvest_sequence(&fruit, &robot.left_stowed, &robot.right_stowed, &scene, &spec).unwrap();
        assert_eq!(plan.left_goal, plan.right_goal);
        assert!(plan.phase_interval(Phase::LeftReach).unwrap().1 <= plan.phase_interval(Phase::RightReach).unwrap().0);
    }

    #[test]
    fn occupied_peduncle_region_blocks_left_reach() {
        let (robot, _, fruit, spec) = nominal_setup();
        let spot_q = JointVector(alloc::vec![0.0, -0.6, 0.0, 1.4, 0.0, -0.8]);
        let (left_goal, _) = task_space_transform(&fruit, &spec);
        let mut pts = Vec::new();
        for i in -3..=3 {
            for j in -3..=3 {
                for k in -3..=3 {
                    pts.push(left_goal + Vector3::new(i as f64, j as f64, k as f64) * 0.01);
                }
            }
        }
        let grid = grid_from_points(&pts, 0.02, 0.0).unwrap();
        let scene = robot.arm_scene(grid, &spot_q).unwrap();
        let r = plan_harvest_sequence(&fruit, &robot.left_stowed, &robot.right_stowed, &scene, &spec);
        assert_eq!(
            r,
            Err(BimanualError::PhaseInfeasible {
                phase: Phase::LeftReach,
                cause: ReachFailure::NoCollisionFreeSolution
            })
        );
    }
}
