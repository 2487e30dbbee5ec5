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
//! Swinging-fruit physics, harvest execution and seeded trial batches.
//!
//! The pendulum is integrated in Cartesian coordinates relative to its anchor
//! with the cord held at constant length; spherical angles are only used at the
//! boundary.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bimanual::{HarvestPlan, HarvestSequenceSpec, Phase};
use crate::collision::CollisionScene;
use crate::orchestrator::{nominal_indoor_config, run_mission, Localization, MissionConfig, MissionError, MissionReport, MissionResources};
use crate::kinematics::{fk_unchecked, sample_reachable_set, JointVector, ReachableSet};
use crate::pose::Pose;
use crate::robot::{NominalRobot, LEFT, RIGHT};

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_DT: f64 = 1e-3;

const NOISE_STREAM: u64 = 1;
const WIND_STREAM: u64 = 2;
const SLIP_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("time step {0} outside (0, 0.01]")]
    StepOutOfRange(f64),
    #[error("invalid pendulum: {0}")]
    InvalidPendulum(&'static str),
    #[error("invalid noise model: {0}")]
    InvalidNoise(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Spherical-pendulum coordinates, `theta` measured from the downward vertical.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphericalState {
    pub theta: f64,
    pub phi: f64,
    pub theta_dot: f64,
    pub phi_dot: f64,
}

/// Fruit hanging from a rigid cord.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PendulumRepr", into = "PendulumRepr")]
pub struct PendulumTarget {
    pub anchor: Vector3<f64>,
    pub cord_length: f64,
    pub mass: f64,
    pub damping: f64,
    pub fruit_radius: f64,
    /// Fruit position relative to the anchor.
    pub rel: Vector3<f64>,
    pub vel: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PendulumRepr {
    anchor: [f64; 3],
    cord_length: f64,
    #[serde(default = "default_mass")]
    mass: f64,
    #[serde(default)]
    damping: f64,
    #[serde(default = "default_fruit_radius")]
    fruit_radius: f64,
    #[serde(default)]
    state: SphericalState,
}

fn default_mass() -> f64 {
    0.2
}

fn default_fruit_radius() -> f64 {
    0.04
}

impl TryFrom<PendulumRepr> for PendulumTarget {
    type Error = SimError;

    fn try_from(r: PendulumRepr) -> Result<Self, SimError> {
        PendulumTarget::new(Vector3::from(r.anchor), r.cord_length, r.mass, r.damping, r.fruit_radius, r.state)
    }
}

impl From<PendulumTarget> for PendulumRepr {
    fn from(p: PendulumTarget) -> Self {
        PendulumRepr {
            anchor: p.anchor.into(),
            cord_length: p.cord_length,
            mass: p.mass,
            damping: p.damping,
            fruit_radius: p.fruit_radius,
            state: p.spherical(),
        }
    }
}

impl PendulumTarget {
    pub fn new(
        anchor: Vector3<f64>,
        cord_length: f64,
        mass: f64,
        damping: f64,
        fruit_radius: f64,
        state: SphericalState,
    ) -> Result<Self, SimError> {
        if !(cord_length > 0.0 && cord_length.is_finite()) {
            return Err(SimError::InvalidPendulum("cord_length must be positive"));
        }
        if !(mass > 0.0 && damping >= 0.0 && fruit_radius > 0.0) {
            return Err(SimError::InvalidPendulum("mass and radius must be positive, damping non-negative"));
        }
        if anchor.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidPendulum("anchor must be finite"));
        }
        let SphericalState { theta, phi, theta_dot, phi_dot } = state;
        let (st, ct, sp, cp) = (theta.sin(), theta.cos(), phi.sin(), phi.cos());
        let l = cord_length;
        let rel = Vector3::new(st * cp, st * sp, -ct) * l;
        let e_theta = Vector3::new(ct * cp, ct * sp, st);
        let e_phi = Vector3::new(-sp, cp, 0.0);
        let vel = e_theta * (l * theta_dot) + e_phi * (l * st * phi_dot);
        Ok(Self { anchor, cord_length, mass, damping, fruit_radius, rel, vel })
    }

    /// At rest below `anchor`.
    pub fn hanging(anchor: Vector3<f64>, cord_length: f64) -> Self {
        Self::new(anchor, cord_length, default_mass(), 0.0, default_fruit_radius(), SphericalState::default())
            .expect("positive cord length")
    }

    pub fn fruit_position(&self) -> Vector3<f64> {
        self.anchor + self.rel
    }

    pub fn spherical(&self) -> SphericalState {
        let l = self.cord_length;
        let theta = (-self.rel.z / l).clamp(-1.0, 1.0).acos();
        let st = theta.sin();
        let phi = if st.abs() < 1e-12 { 0.0 } else { self.rel.y.atan2(self.rel.x) };
        let (sp, cp, ct) = (phi.sin(), phi.cos(), theta.cos());
        let e_theta = Vector3::new(ct * cp, ct * sp, st);
        let e_phi = Vector3::new(-sp, cp, 0.0);
        let theta_dot = self.vel.dot(&e_theta) / l;
        let phi_dot = if st.abs() < 1e-9 { 0.0 } else { self.vel.dot(&e_phi) / (l * st) };
        SphericalState { theta, phi, theta_dot, phi_dot }
    }

    /// Kinetic plus gravitational energy, zero at rest.
    pub fn energy(&self) -> f64 {
        self.mass * (0.5 * self.vel.norm_squared() + GRAVITY * (self.rel.z + self.cord_length))
    }

    fn accel(&self, r: &Vector3<f64>, v: &Vector3<f64>, f: &Vector3<f64>) -> Vector3<f64> {
        let ext = Vector3::new(0.0, 0.0, -GRAVITY) + f - v * self.damping;
        let lambda = (r.dot(&ext) + v.norm_squared()) / (self.cord_length * self.cord_length);
        ext - r * lambda
    }

    /// One RK4 step followed by projection back onto the cord sphere.
    pub fn step(&mut self, dt: f64, excitation: &Vector3<f64>) -> Result<(), SimError> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(SimError::StepOutOfRange(dt));
        }
        let (r0, v0) = (self.rel, self.vel);
        let k1v = self.accel(&r0, &v0, excitation);
        let k1r = v0;
        let (r, v) = (r0 + k1r * (dt / 2.0), v0 + k1v * (dt / 2.0));
        let k2v = self.accel(&r, &v, excitation);
        let k2r = v;
        let (r, v) = (r0 + k2r * (dt / 2.0), v0 + k2v * (dt / 2.0));
        let k3v = self.accel(&r, &v, excitation);
        let k3r = v;
        let (r, v) = (r0 + k3r * dt, v0 + k3v * dt);
        let k4v = self.accel(&r, &v, excitation);
        let k4r = v;
        let r = r0 + (k1r + k2r * 2.0 + k3r * 2.0 + k4r) * (dt / 6.0);
        let v = v0 + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        let u = r.normalize();
        self.rel = u * self.cord_length;
        self.vel = v - u * u.dot(&v);
        Ok(())
    }
}

pub fn step_pendulum(target: &PendulumTarget, dt: f64, excitation: &Vector3<f64>) -> Result<PendulumTarget, SimError> {
    let mut next = target.clone();
    next.step(dt, excitation)?;
    Ok(next)
}

/// Per-trial disturbances. The seed is normally filled in by the trial runner.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Standard deviation of each axis of the fruit position estimate (m).
    pub pose_noise_sigma: f64,
    /// Peak horizontal excitation (m/s^2).
    pub wind_amplitude: f64,
    pub slip_probability: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.pose_noise_sigma) && ok(self.wind_amplitude) && ok(self.slip_probability)) {
            return Err(SimError::InvalidNoise("values must be finite and non-negative"));
        }
        if self.slip_probability > 1.0 {
            return Err(SimError::InvalidNoise("slip_probability must not exceed 1"));
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct WindComponent {
    freq: f64,
    phase: f64,
    heading: f64,
}

/// Sum of three horizontal sinusoids with random frequency, phase and heading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindField {
    amplitude: f64,
    components: Vec<WindComponent>,
}

impl WindField {
    pub fn calm() -> Self {
        Self { amplitude: 0.0, components: Vec::new() }
    }

    pub fn new<R: Rng>(amplitude: f64, rng: &mut R) -> Self {
        let components = (0..3)
            .map(|_| WindComponent {
                freq: rng.random_range(0.4..1.4),
                phase: rng.random_range(0.0..2.0 * PI),
                heading: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        Self { amplitude, components }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        if self.amplitude == 0.0 {
            return Vector3::zeros();
        }
        let w = self.amplitude / (self.components.len() as f64).sqrt();
        self.components.iter().fold(Vector3::zeros(), |acc, c| {
            let s = w * (2.0 * PI * c.freq * t + c.phase).sin();
            acc + Vector3::new(c.heading.cos(), c.heading.sin(), 0.0) * s
        })
    }
}

/// Simulated environment on a fixed-step clock.
#[derive(Clone, Debug)]
pub struct SimWorld {
    pub t: f64,
    pub dt: f64,
    pub pendulum: PendulumTarget,
    pub wind: WindField,
    /// The left pincher holds the peduncle; the fruit is frozen in place.
    pub held: bool,
    pub harvested: bool,
    noise_rng: ChaCha8Rng,
    slip_rng: ChaCha8Rng,
}

impl SimWorld {
    pub fn new(pendulum: PendulumTarget, noise: &NoiseModel, dt: f64) -> Result<Self, SimError> {
        noise.validate()?;
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(SimError::StepOutOfRange(dt));
        }
        let wind = WindField::new(noise.wind_amplitude, &mut stream(noise.seed, WIND_STREAM));
        Ok(Self {
            t: 0.0,
            dt,
            pendulum,
            wind,
            held: false,
            harvested: false,
            noise_rng: stream(noise.seed, NOISE_STREAM),
            slip_rng: stream(noise.seed, SLIP_STREAM),
        })
    }

    /// Integrates for `duration` rounded to whole steps.
    pub fn advance(&mut self, duration: f64) {
        let n = (duration / self.dt).round().max(0.0) as u64;
        for _ in 0..n {
            self.tick();
        }
    }

    fn tick(&mut self) {
        if !(self.held || self.harvested) {
            let f = self.wind.at(self.t);
            self.pendulum.step(self.dt, &f).expect("dt validated at construction");
        }
        self.t += self.dt;
    }

    pub fn fruit_position(&self) -> Vector3<f64> {
        self.pendulum.fruit_position()
    }

    /// Fruit frame: origin at the fruit centre, z axis up the cord.
    pub fn fruit_pose(&self) -> Pose {
        let up = -self.pendulum.rel / self.pendulum.cord_length;
        let rot = UnitQuaternion::rotation_between(&Vector3::z(), &up).unwrap_or_else(UnitQuaternion::identity);
        Pose::new(self.fruit_position(), rot)
    }

    /// Peduncle point: `offset` expressed in the fruit frame.
    pub fn peduncle_point(&self, offset: &Vector3<f64>) -> Vector3<f64> {
        self.fruit_pose().transform_point(offset)
    }

    /// `p` plus isotropic Gaussian noise.
    pub fn noisy(&mut self, p: &Vector3<f64>, sigma: f64) -> Vector3<f64> {
        let mut n = Vector3::zeros();
        for k in 0..3 {
            let z: f64 = self.noise_rng.sample(StandardNormal);
            n[k] = z * sigma;
        }
        p + n
    }

    /// Uniform draw compared against the slip probability at detach time.
    pub fn draw_slip(&mut self) -> f64 {
        self.slip_rng.random::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Slip,
    Infeasible,
    MissedGrasp,
    MissedHold,
}

impl FailureCause {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCause::Slip => "slip",
            FailureCause::Infeasible => "infeasible",
            FailureCause::MissedGrasp => "missed_grasp",
            FailureCause::MissedHold => "missed_hold",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub phase: Phase,
    pub ok: bool,
}

/// Sampled state for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajSample {
    pub t: f64,
    pub left: Pose,
    pub right: Pose,
    pub fruit: Pose,
    pub q_left: JointVector,
    pub q_right: JointVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub phases: Vec<PhaseOutcome>,
    pub hold: bool,
    pub grasp: bool,
    pub detached: bool,
    pub failure_cause: Option<FailureCause>,
    pub hold_error: f64,
    pub grasp_error: f64,
}

/// Runs a harvest plan against the simulated fruit. The plan clock starts at
/// the world's current time; the world advances by the plan duration.
///
/// The hold is judged when the left reach ends, the grasp when the right reach
/// ends and the detach when the twist ends. A missed grasp outranks a missed
/// hold, which outranks a slip.
pub fn simulate_execution(
    plan: &HarvestPlan,
    world: &mut SimWorld,
    scene: &CollisionScene,
    noise: &NoiseModel,
    spec: &HarvestSequenceSpec,
    mut trace: Option<(&mut Vec<TrajSample>, usize)>,
) -> Result<ExecutionOutcome, SimError> {
    noise.validate()?;
    let chain = |name: &str| scene.chain(name).map_err(|e| SimError::InvalidScenario(alloc::format!("{e}")));
    let (left, right) = (chain(LEFT)?, chain(RIGHT)?);
    let end_of = |p: Phase| plan.phase_interval(p).map(|(_, b)| b);
    let (t_hold, t_grasp, t_detach, t_release) = match (
        end_of(Phase::LeftReach),
        end_of(Phase::RightReach),
        end_of(Phase::Twist),
        plan.phase_interval(Phase::Retract).map(|(a, _)| a),
    ) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => return Err(SimError::InvalidScenario("plan lacks a harvest phase".into())),
    };
    let tool = |chain: &crate::kinematics::ChainSpec, name: &str, t: f64| {
        let (q, _) = plan.state_at(name, t).expect("both arms have segments");
        (fk_unchecked(chain, &q), q)
    };
    let offset = Vector3::from(spec.peduncle_offset);
    let slip_u = world.draw_slip();
    let n = (plan.duration() / world.dt).round() as u64;
    let (mut hold, mut grasp, mut detached) = (None::<bool>, None::<bool>, None::<bool>);
    let (mut hold_error, mut grasp_error) = (f64::NAN, f64::NAN);
    for step in 0..=n {
        let local = step as f64 * world.dt;
        if hold.is_none() && local >= t_hold - 1e-9 {
            let (p, _) = tool(left, LEFT, t_hold);
            hold_error = (p.position - world.peduncle_point(&offset)).norm();
            let ok = hold_error <= spec.hold_radius;
            world.held = ok;
            if ok {
                world.pendulum.vel = Vector3::zeros();
            }
            hold = Some(ok);
        }
        if grasp.is_none() && local >= t_grasp - 1e-9 {
            let (p, _) = tool(right, RIGHT, t_grasp);
            grasp_error = (p.position - world.fruit_position()).norm();
            grasp = Some(grasp_error <= spec.grasp_radius);
        }
        if detached.is_none() && local >= t_detach - 1e-9 {
            let ok = hold == Some(true) && grasp == Some(true) && slip_u >= noise.slip_probability;
            world.harvested |= ok;
            detached = Some(ok);
        }
        if world.held && local >= t_release - 1e-9 {
            world.held = false;
        }
        if let Some((buf, stride)) = trace.as_mut() {
            if step % (*stride).max(1) as u64 == 0 {
                let (lp, ql) = tool(left, LEFT, local);
                let (rp, qr) = tool(right, RIGHT, local);
                buf.push(TrajSample { t: world.t, left: lp, right: rp, fruit: world.fruit_pose(), q_left: ql, q_right: qr });
            }
        }
        if step < n {
            world.tick();
        }
    }
    let (hold, grasp, detached) = (hold.unwrap_or(false), grasp.unwrap_or(false), detached.unwrap_or(false));
    let failure_cause = if detached {
        None
    } else if !grasp {
        Some(FailureCause::MissedGrasp)
    } else if !hold {
        Some(FailureCause::MissedHold)
    } else {
        Some(FailureCause::Slip)
    };
    let phases = alloc::vec![
        PhaseOutcome { phase: Phase::Extend, ok: true },
        PhaseOutcome { phase: Phase::LeftReach, ok: true },
        PhaseOutcome { phase: Phase::LeftHold, ok: hold },
        PhaseOutcome { phase: Phase::RightReach, ok: grasp },
        PhaseOutcome { phase: Phase::Twist, ok: detached },
        PhaseOutcome { phase: Phase::Retract, ok: true },
    ];
    Ok(ExecutionOutcome { phases, hold, grasp, detached, failure_cause, hold_error, grasp_error })
}

/// Reachable voxels of both small arms in the mount frame.
#[derive(Clone, Debug)]
pub struct WorkspaceSummary {
    pub left: ReachableSet,
    pub right: ReachableSet,
}

impl WorkspaceSummary {
    pub fn build(robot: &NominalRobot, n: usize, seed: u64, voxel_size: f64) -> Result<Self, SimError> {
        let err = |e: crate::collision::CollisionError| SimError::InvalidScenario(alloc::format!("{e}"));
        Ok(Self {
            left: sample_reachable_set(&robot.left, n, seed, voxel_size).map_err(err)?,
            right: sample_reachable_set(&robot.right, n, seed.wrapping_add(1), voxel_size).map_err(err)?,
        })
    }
}

/// True when the left summary marks the peduncle point's voxel and the right
/// summary marks the fruit point's voxel. Points are given in the world and
/// moved into the mount frame first.
pub fn workspace_contains(
    summary: &WorkspaceSummary,
    mount: &Pose,
    peduncle: &Vector3<f64>,
    fruit: &Vector3<f64>,
) -> bool {
    let inv = mount.inverse();
    summary.left.contains(&inv.transform_point(peduncle)) && summary.right.contains(&inv.transform_point(fruit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Indoor,
    Outdoor,
}

impl Environment {
    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Indoor => "indoor",
            Environment::Outdoor => "outdoor",
        }
    }
}

/// Everything needed to run a batch of missions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub environment: Environment,
    #[serde(default)]
    pub noise: NoiseModel,
    pub mission: MissionConfig,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| SimError::InvalidScenario(alloc::format!("{e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.noise.validate()?;
        self.mission.validate().map_err(|e| SimError::InvalidScenario(alloc::format!("{e}")))
    }

    /// Single hanging fruit in the lab, motion-capture localization.
    pub fn nominal_indoor(slip_probability: f64) -> Self {
        Scenario {
            name: "indoor".into(),
            environment: Environment::Indoor,
            noise: NoiseModel { slip_probability, ..NoiseModel::default() },
            mission: nominal_indoor_config(),
        }
    }

    /// Same fruit in the orchard: perception localization, wind and pose noise.
    pub fn nominal_outdoor(wind_amplitude: f64, pose_noise_sigma: f64, slip_probability: f64) -> Self {
        let mut mission = nominal_indoor_config();
        mission.localization = Localization::Perception;
        mission.obstacles.clear();
        Scenario {
            name: "outdoor".into(),
            environment: Environment::Outdoor,
            noise: NoiseModel { pose_noise_sigma, wind_amplitude, slip_probability, seed: 0 },
            mission,
        }
    }
}

/// One trial, i.e. one full mission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u32,
    pub seed: u64,
    pub environment: Environment,
    pub phases: Vec<PhaseOutcome>,
    pub success: bool,
    pub failure_cause: Option<FailureCause>,
    /// Simulated mission time (s).
    pub wall_time: f64,
    pub attempts: u32,
    pub interventions: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub environment: Environment,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub slip: usize,
    pub infeasible: usize,
    pub missed_grasp: usize,
    pub missed_hold: usize,
}

impl TrialSummary {
    pub fn from_records(environment: Environment, records: &[TrialRecord]) -> Self {
        let count = |c: FailureCause| records.iter().filter(|r| r.failure_cause == Some(c)).count();
        let successes = records.iter().filter(|r| r.success).count();
        TrialSummary {
            environment,
            trials: records.len(),
            successes,
            success_rate: if records.is_empty() { 0.0 } else { successes as f64 / records.len() as f64 },
            slip: count(FailureCause::Slip),
            infeasible: count(FailureCause::Infeasible),
            missed_grasp: count(FailureCause::MissedGrasp),
            missed_hold: count(FailureCause::MissedHold),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialBatch {
    pub records: Vec<TrialRecord>,
    pub summary: TrialSummary,
}

fn mission_err(e: MissionError) -> SimError {
    match e {
        MissionError::InvalidConfig(m) => SimError::InvalidScenario(m),
        other => SimError::Internal(alloc::format!("{other}")),
    }
}

pub fn build_resources(scenario: &Scenario) -> Result<MissionResources, SimError> {
    scenario.validate()?;
    MissionResources::build(&scenario.mission).map_err(mission_err)
}

/// Runs mission `trial_id` with seed `seed`.
pub fn run_trial(
    scenario: &Scenario,
    res: &MissionResources,
    trial_id: u32,
    seed: u64,
    traj_stride: Option<usize>,
) -> Result<(TrialRecord, MissionReport), SimError> {
    let noise = NoiseModel { seed, ..scenario.noise.clone() };
    let report = run_mission(&scenario.mission, res, &noise, traj_stride).map_err(mission_err)?;
    let failed = report.results.iter().find(|r| !r.success);
    let last = report.results.last();
    let record = TrialRecord {
        trial_id,
        seed,
        environment: scenario.environment,
        phases: failed.or(last).map(|r| r.phases.clone()).unwrap_or_default(),
        success: report.success(),
        failure_cause: failed.and_then(|r| r.failure_cause),
        wall_time: report.duration,
        attempts: report.results.iter().map(|r| r.attempts).sum(),
        interventions: report.results.iter().map(|r| r.interventions).sum(),
    };
    Ok((record, report))
}

/// `n` missions with seeds `base_seed + i`, reusing precomputed resources.
pub fn run_trials_with(scenario: &Scenario, res: &MissionResources, n: usize, base_seed: u64) -> Result<TrialBatch, SimError> {
    if n == 0 {
        return Err(SimError::InvalidScenario("at least one trial is required".into()));
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let (rec, _) = run_trial(scenario, res, i as u32, base_seed.wrapping_add(i as u64), None)?;
        records.push(rec);
    }
    let summary = TrialSummary::from_records(scenario.environment, &records);
    Ok(TrialBatch { records, summary })
}

pub fn run_trials(scenario: &Scenario, n: usize, base_seed: u64) -> Result<TrialBatch, SimError> {
    let res = build_resources(scenario)?;
    run_trials_with(scenario, &res, n, base_seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar(theta: f64, l: f64) -> PendulumTarget {
        PendulumTarget::new(
            Vector3::zeros(),
            l,
            1.0,
            0.0,
            0.04,
            SphericalState { theta, ..Default::default() },
        )
        .unwrap()
    }

    #[test]
    fn rest_is_fixed_point() {
        let mut p = planar(0.0, 0.3);
        for _ in 0..1000 {
            p.step(1e-3, &Vector3::zeros()).unwrap();
        }
        assert!(p.vel.norm() < 1e-15);
        assert!((p.rel - Vector3::new(0.0, 0.0, -0.3)).norm() < 1e-15);
    }

    #[test]
    fn step_bounds() {
        let p = planar(0.1, 0.3);
        assert_eq!(step_pendulum(&p, 0.0, &Vector3::zeros()), Err(SimError::StepOutOfRange(0.0)));
        assert!(step_pendulum(&p, 0.011, &Vector3::zeros()).is_err());
        assert!(step_pendulum(&p, 0.01, &Vector3::zeros()).is_ok());
    }

    #[test]
    fn spherical_round_trip() {
        let s = SphericalState { theta: 0.4, phi: 1.1, theta_dot: -0.3, phi_dot: 0.7 };
        let p = PendulumTarget::new(Vector3::new(1.0, 2.0, 3.0), 0.5, 0.2, 0.0, 0.04, s).unwrap();
        let back = p.spherical();
        assert!((back.theta - s.theta).abs() < 1e-12);
        assert!((back.phi - s.phi).abs() < 1e-12);
        assert!((back.theta_dot - s.theta_dot).abs() < 1e-12);
        assert!((back.phi_dot - s.phi_dot).abs() < 1e-12);
        assert!((p.rel.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn damping_drains_energy() {
        let mut p = planar(0.3, 0.3);
        p.damping = 0.5;
        let mut last = p.energy();
        for _ in 0..20 {
            for _ in 0..100 {
                p.step(1e-3, &Vector3::zeros()).unwrap();
            }
            let e = p.energy();
            assert!(e <= last + 1e-12);
            last = e;
        }
    }

    #[test]
    fn wind_is_horizontal_and_bounded() {
        let w = WindField::new(0.5, &mut stream(4, WIND_STREAM));
        for i in 0..100 {
            let a = w.at(i as f64 * 0.1);
            assert_eq!(a.z, 0.0);
            assert!(a.norm() <= 0.5 * 3f64.sqrt() + 1e-12);
        }
        assert_eq!(WindField::calm().at(1.0), Vector3::zeros());
    }

    #[test]
    fn noise_validation() {
        let mut n = NoiseModel { slip_probability: 1.5, ..Default::default() };
        assert!(n.validate().is_err());
        n.slip_probability = 0.5;
        n.pose_noise_sigma = -1.0;
        assert!(n.validate().is_err());
    }

    #[test]
    fn peduncle_follows_the_cord() {
        let p = planar(0.0, 0.3);
        let w = SimWorld::new(p, &NoiseModel::default(), 1e-3).unwrap();
        let q = w.peduncle_point(&Vector3::new(0.0, 0.0, 0.1));
        assert!((q - Vector3::new(0.0, 0.0, -0.2)).norm() < 1e-12);
        let tilted = SimWorld::new(planar(0.5, 0.3), &NoiseModel::default(), 1e-3).unwrap();
        let q = tilted.peduncle_point(&Vector3::new(0.0, 0.0, 0.1));
        // still on the cord, 0.1 m from the fruit
        assert!((q.norm() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_indoor_batch_always_succeeds() {
        let b = run_trials(&Scenario::nominal_indoor(0.0), 10, 7).unwrap();
        assert_eq!(b.summary.successes, 10);
        assert_eq!(b.records.iter().map(|r| r.seed).collect::<Vec<_>>(), (7..17).collect::<Vec<_>>());
    }

    #[test]
    fn forced_slip_always_slips() {
        let b = run_trials(&Scenario::nominal_indoor(1.0), 5, 0).unwrap();
        assert!(b.records.iter().all(|r| r.failure_cause == Some(FailureCause::Slip)));
    }

    #[test]
    fn scenario_json_round_trip() {
        let sc = Scenario::nominal_outdoor(0.3, 0.005, 0.1);
        let s = serde_json::to_string(&sc).unwrap();
        let back = Scenario::from_json(&s).unwrap();
        assert_eq!(back.noise, sc.noise);
        assert_eq!(back.mission.localization, Localization::Perception);
        assert!(run_trials(&sc, 0, 0).is_err());
    }

    #[test]
    fn workspace_membership() {
        let robot = NominalRobot::load();
        let ws = WorkspaceSummary::build(&robot, 50_000, 0, 0.02).unwrap();
        let mount = Pose::from_translation(0.9, 0.0, 0.65);
        let fruit = mount.transform_point(&Vector3::new(0.46, 0.0, 0.0));
        let ped = fruit + Vector3::new(0.0, 0.0, 0.1);
        assert!(workspace_contains(&ws, &mount, &ped, &fruit));
        let far = fruit + Vector3::new(2.0, 0.0, 0.0);
        assert!(!workspace_contains(&ws, &mount, &ped, &far));
    }
}
