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
//! Mission state machine: navigate, detect, view, re-localize, check the
//! workspace, plan, execute, evaluate and reinitialize.
//!
//! Navigation is a list of scripted base poses and the operator is a scripted
//! reposition that puts the body at a fixed distance from the fruit.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::bimanual::{plan_harvest_sequence, task_space_transform, HarvestPlan, HarvestSequenceSpec, Phase};
use crate::collision::{grid_from_points, CollisionScene, OccupancyGrid, DEFAULT_INFLATION, DEFAULT_VOXEL_SIZE};
use crate::kinematics::JointVector;
use crate::nbv::{plan_nbv, NbvConfig};
use crate::perception::synth::{render_spheres, SphereTarget};
use crate::perception::{perceive, Intrinsics, DEFAULT_OUTLIER_SIGMA};
use crate::pose::{quat_from_axes, Pose};
use crate::robot::{NominalRobot, LEFT, RIGHT};
use crate::sim::{
    simulate_execution, workspace_contains, FailureCause, NoiseModel, PendulumTarget, PhaseOutcome, SimError, SimWorld,
    TrajSample, WorkspaceSummary, DEFAULT_DT,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionState {
    Navigate,
    InitialDetect,
    NbvMove,
    Relocalize,
    WorkspaceCheck,
    PlanSequence,
    Execute,
    Evaluate,
    Reinit,
    OperatorIntervention,
    Done,
}

/// Edges of the mission graph. Besides the nominal loop, a failed detection
/// goes to the operator, an infeasible plan or an exhausted operator budget
/// goes straight to evaluation.
pub fn is_legal_transition(from: MissionState, to: MissionState) -> bool {
    use MissionState::*;
    matches!(
        (from, to),
        (Navigate, InitialDetect)
            | (InitialDetect, NbvMove)
            | (InitialDetect, OperatorIntervention)
            | (InitialDetect, Evaluate)
            | (NbvMove, Relocalize)
            | (Relocalize, WorkspaceCheck)
            | (Relocalize, OperatorIntervention)
            | (Relocalize, Evaluate)
            | (WorkspaceCheck, PlanSequence)
            | (WorkspaceCheck, OperatorIntervention)
            | (WorkspaceCheck, Evaluate)
            | (OperatorIntervention, NbvMove)
            | (PlanSequence, Execute)
            | (PlanSequence, Evaluate)
            | (Execute, Evaluate)
            | (Evaluate, Reinit)
            | (Evaluate, NbvMove)
            | (Reinit, Navigate)
            | (Reinit, Done)
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Localization {
    /// Ground-truth fruit position plus pose noise.
    #[default]
    MotionCapture,
    /// Synthetic frame through the perception pipeline plus pose noise.
    Perception,
}

/// Axis-aligned obstacle in the world (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Body poses `[x, y, yaw]` visited on the way to the target; the last one is kept.
    pub approach: Vec<[f64; 3]>,
    pub pendulum: PendulumTarget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub targets: Vec<TargetSpec>,
    pub localization: Localization,
    pub max_attempts: u32,
    pub max_interventions: u32,
    pub nbv_move_duration: f64,
    pub reinit_duration: f64,
    /// Horizontal body-to-fruit distance after an operator reposition (m).
    pub reposition_range: f64,
    pub outlier_sigma: f64,
    pub camera: Intrinsics,
    /// Optical frame of the camera in the base-arm tool frame.
    pub camera_in_tool: Pose,
    pub nbv: NbvConfig,
    /// Defaults to the nominal sequence of the robot.
    pub sequence: Option<HarvestSequenceSpec>,
    pub robot: Option<NominalRobot>,
    pub obstacles: Vec<ObstacleBox>,
    pub voxel_size: f64,
    pub inflation: f64,
    pub reach_samples: usize,
    pub reach_voxel: f64,
    pub reach_seed: u64,
    pub dt: f64,
}

/// Camera looking along the tool x axis with image x to the tool's right.
pub fn default_camera_in_tool() -> Pose {
    let q = quat_from_axes(&Vector3::new(0.0, -1.0, 0.0), &Vector3::new(0.0, 0.0, -1.0), &Vector3::x());
    Pose::new(Vector3::zeros(), q)
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            targets: Vec::new(),
            localization: Localization::MotionCapture,
            max_attempts: 1,
            max_interventions: 3,
            nbv_move_duration: 3.0,
            reinit_duration: 3.0,
            reposition_range: 1.35,
            outlier_sigma: DEFAULT_OUTLIER_SIGMA,
            camera: Intrinsics::vga(),
            camera_in_tool: default_camera_in_tool(),
            nbv: NbvConfig::default(),
            sequence: None,
            robot: None,
            obstacles: Vec::new(),
            voxel_size: DEFAULT_VOXEL_SIZE,
            inflation: DEFAULT_INFLATION,
            reach_samples: 50_000,
            reach_voxel: 0.02,
            reach_seed: 0,
            dt: DEFAULT_DT,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        let bad = |m: &str| Err(MissionError::InvalidConfig(m.into()));
        if self.targets.is_empty() {
            return bad("at least one target is required");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if !(self.nbv_move_duration >= 0.0 && self.reinit_duration >= 0.0 && self.reposition_range > 0.0) {
            return bad("durations must be non-negative and the reposition range positive");
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return bad("dt must lie in (0, 0.01]");
        }
        if self.reach_samples == 0 || !(self.reach_voxel > 0.0) {
            return bad("reachable-set sampling needs samples and a positive voxel size");
        }
        self.camera.validate().map_err(|e| MissionError::InvalidConfig(alloc::format!("{e}")))?;
        self.nbv.validate().map_err(|e| MissionError::InvalidConfig(alloc::format!("{e}")))?;
        if let Some(s) = &self.sequence {
            s.validate().map_err(|e| MissionError::InvalidConfig(alloc::format!("{e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MissionError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: MissionState, to: MissionState },
    #[error("invalid mission configuration: {0}")]
    InvalidConfig(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<SimError> for MissionError {
    fn from(e: SimError) -> Self {
        MissionError::Internal(alloc::format!("{e}"))
    }
}

/// Data derived once per configuration and shared by every mission.
#[derive(Clone, Debug)]
pub struct MissionResources {
    pub robot: NominalRobot,
    pub spec: HarvestSequenceSpec,
    pub grid: OccupancyGrid,
    pub workspace: WorkspaceSummary,
}

fn obstacle_grid(boxes: &[ObstacleBox], voxel: f64, inflation: f64) -> Result<OccupancyGrid, MissionError> {
    if boxes.is_empty() {
        return Ok(OccupancyGrid::empty());
    }
    let step = voxel / 2.0;
    let mut pts = Vec::new();
    for b in boxes {
        let n: Vec<usize> = (0..3).map(|k| (((b.max[k] - b.min[k]) / step).ceil().max(0.0) as usize) + 1).collect();
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let at = |idx: usize, a: usize| (b.min[a] + idx as f64 * step).min(b.max[a]);
                    pts.push(Vector3::new(at(i, 0), at(j, 1), at(k, 2)));
                }
            }
        }
    }
    grid_from_points(&pts, voxel, inflation).map_err(|e| MissionError::InvalidConfig(alloc::format!("{e}")))
}

impl MissionResources {
    pub fn build(cfg: &MissionConfig) -> Result<Self, MissionError> {
        cfg.validate()?;
        let robot = cfg.robot.clone().unwrap_or_else(NominalRobot::load);
        let spec = cfg.sequence.clone().unwrap_or_else(|| HarvestSequenceSpec::nominal(&robot));
        let grid = obstacle_grid(&cfg.obstacles, cfg.voxel_size, cfg.inflation)?;
        let workspace = WorkspaceSummary::build(&robot, cfg.reach_samples, cfg.reach_seed, cfg.reach_voxel)?;
        Ok(Self { robot, spec, grid, workspace })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RetryNbv,
    NextTarget,
    Done,
}

/// Success moves on; a failure retries while attempts remain.
pub fn evaluate_outcome(success: bool, attempts_used: u32, max_attempts: u32, targets_remaining: usize) -> Decision {
    if !success && attempts_used < max_attempts {
        Decision::RetryNbv
    } else if targets_remaining > 0 {
        Decision::NextTarget
    } else {
        Decision::Done
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Navigate { body: [f64; 3] },
    Detect { found: bool, estimate: Option<[f64; 3]> },
    MoveBaseArm { q: JointVector, feasible: bool },
    Workspace { inside: bool },
    OperatorReposition { body: [f64; 3] },
    Plan { feasible: bool, reason: Option<String> },
    Execute { hold: bool, grasp: bool, detached: bool, failure: Option<FailureCause> },
    Evaluate { success: bool, decision: Decision },
    Reinit { spot: JointVector, left: JointVector, right: JointVector },
}

/// One line of the state trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub t: f64,
    pub target: usize,
    /// Attempt on `target`, counting a plan started by this transition.
    pub attempt: u32,
    pub from: MissionState,
    pub to: MissionState,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: usize,
    pub success: bool,
    pub failure_cause: Option<FailureCause>,
    pub attempts: u32,
    pub interventions: u32,
    pub phases: Vec<PhaseOutcome>,
}

/// Mutable mission state besides the discrete state label.
#[derive(Clone, Debug)]
pub struct MissionWorld {
    pub t: f64,
    pub body: [f64; 3],
    pub spot_q: JointVector,
    pub left_q: JointVector,
    pub right_q: JointVector,
    pub target: usize,
    pub sim: SimWorld,
    pub noise: NoiseModel,
    pub estimate: Option<Vector3<f64>>,
    pub attempts: u32,
    pub interventions: u32,
    pub plan: Option<HarvestPlan>,
    pub results: Vec<TargetResult>,
    pub traj: Option<(Vec<TrajSample>, usize)>,
    /// Plans handed to execution, in order.
    pub executed: Vec<HarvestPlan>,
    last: Option<(bool, Option<FailureCause>, Vec<PhaseOutcome>)>,
    decision: Option<Decision>,
}

fn body_pose(b: &[f64; 3]) -> Pose {
    Pose::from_rpy(Vector3::new(b[0], b[1], 0.0), 0.0, 0.0, b[2])
}

fn target_noise(noise: &NoiseModel, target: usize) -> NoiseModel {
    NoiseModel {
        seed: noise.seed.wrapping_add((target as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        ..noise.clone()
    }
}

impl MissionWorld {
    pub fn new(cfg: &MissionConfig, res: &MissionResources, noise: &NoiseModel) -> Result<Self, MissionError> {
        cfg.validate()?;
        let first = &cfg.targets[0];
        let body = first.approach.first().copied().unwrap_or([0.0; 3]);
        Ok(Self {
            t: 0.0,
            body,
            spot_q: res.robot.spot_home.clone(),
            left_q: res.robot.left_stowed.clone(),
            right_q: res.robot.right_stowed.clone(),
            target: 0,
            sim: SimWorld::new(first.pendulum.clone(), &target_noise(noise, 0), cfg.dt)?,
            noise: noise.clone(),
            estimate: None,
            attempts: 0,
            interventions: 0,
            plan: None,
            results: Vec::new(),
            traj: None,
            executed: Vec::new(),
            last: None,
            decision: None,
        })
    }

    fn placed(&self, res: &MissionResources) -> NominalRobot {
        res.robot.placed(&body_pose(&self.body))
    }

    fn wait(&mut self, duration: f64) {
        self.sim.advance(duration);
        self.t = self.sim.t;
    }

    /// Fruit position estimate in the world, or `None` when nothing is seen.
    fn localize(&mut self, cfg: &MissionConfig, res: &MissionResources) -> Result<Option<Vector3<f64>>, MissionError> {
        let truth = self.sim.fruit_position();
        let seen = match cfg.localization {
            Localization::MotionCapture => Some(truth),
            Localization::Perception => {
                let robot = self.placed(res);
                let cam = robot.mount_pose(&self.spot_q).compose(&cfg.camera_in_tool);
                let c = cam.inverse().transform_point(&truth);
                let sphere = SphereTarget { center: c, radius: self.sim.pendulum.fruit_radius };
                if c.z <= sphere.radius {
                    None
                } else {
                    let (frame, det) = render_spheres(&cfg.camera, &[sphere], None);
                    if det.masks[0].count() < 4 {
                        None
                    } else {
                        let est = perceive(&frame, &cfg.camera, &det, cfg.outlier_sigma)
                            .map_err(|e| MissionError::Internal(alloc::format!("{e}")))?;
                        est.first().map(|e| cam.transform_point(&e.sphere_center()))
                    }
                }
            }
        };
        let sigma = self.noise.pose_noise_sigma;
        Ok(seen.map(|p| self.sim.noisy(&p, sigma)))
    }

    fn fail_infeasible(&mut self) {
        self.last = Some((false, Some(FailureCause::Infeasible), Vec::new()));
    }
}

fn vec3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Performs the work of `state` and returns the next state with the actions taken.
pub fn advance_mission(
    state: MissionState,
    world: &mut MissionWorld,
    cfg: &MissionConfig,
    res: &MissionResources,
) -> Result<(MissionState, Vec<Action>), MissionError> {
    use MissionState::*;
    let mut actions = Vec::new();
    let to_operator = |w: &mut MissionWorld| {
        if w.interventions < cfg.max_interventions {
            OperatorIntervention
        } else {
            w.fail_infeasible();
            Evaluate
        }
    };
    let next = match state {
        Navigate => {
            let tgt = &cfg.targets[world.target];
            if let Some(b) = tgt.approach.last() {
                world.body = *b;
            }
            actions.push(Action::Navigate { body: world.body });
            InitialDetect
        }
        InitialDetect => {
            world.estimate = world.localize(cfg, res)?;
            actions.push(Action::Detect { found: world.estimate.is_some(), estimate: world.estimate.as_ref().map(vec3) });
            if world.estimate.is_some() {
                NbvMove
            } else {
                to_operator(world)
            }
        }
        NbvMove => {
            let est = world.estimate.ok_or_else(|| MissionError::Internal("no target estimate".into()))?;
            let robot = world.placed(res);
            let scene = CollisionScene::new(res.grid.clone(), Vec::new(), Vec::new())
                .map_err(|e| MissionError::Internal(alloc::format!("{e}")))?;
            let sol = plan_nbv(&robot.spot, &scene, &Pose::new(est, Default::default()), &cfg.nbv)
                .map_err(|e| MissionError::Internal(alloc::format!("{e}")))?;
            world.spot_q = sol.q.clone();
            actions.push(Action::MoveBaseArm { q: sol.q, feasible: sol.feasible });
            world.wait(cfg.nbv_move_duration);
            Relocalize
        }
        Relocalize => {
            let est = world.localize(cfg, res)?;
            actions.push(Action::Detect { found: est.is_some(), estimate: est.as_ref().map(vec3) });
            match est {
                Some(e) => {
                    world.estimate = Some(e);
                    WorkspaceCheck
                }
                None => to_operator(world),
            }
        }
        WorkspaceCheck => {
            let est = world.estimate.ok_or_else(|| MissionError::Internal("no target estimate".into()))?;
            let (ped, fruit) = task_space_transform(&Pose::new(est, Default::default()), &res.spec);
            let mount = world.placed(res).mount_pose(&world.spot_q);
            let inside = workspace_contains(&res.workspace, &mount, &ped, &fruit);
            actions.push(Action::Workspace { inside });
            if inside {
                PlanSequence
            } else {
                to_operator(world)
            }
        }
        OperatorIntervention => {
            world.interventions += 1;
            let truth = world.sim.fruit_position();
            let mut d = Vector3::new(truth.x - world.body[0], truth.y - world.body[1], 0.0);
            if d.norm() < 1e-9 {
                d = Vector3::x();
            }
            let d = d.normalize();
            let p = truth - d * cfg.reposition_range;
            world.body = [p.x, p.y, d.y.atan2(d.x)];
            world.spot_q = res.robot.spot_home.clone();
            if world.estimate.is_none() {
                // the operator points the fruit out
                world.estimate = Some(truth);
            }
            actions.push(Action::OperatorReposition { body: world.body });
            NbvMove
        }
        PlanSequence => {
            world.attempts += 1;
            let est = world.estimate.ok_or_else(|| MissionError::Internal("no target estimate".into()))?;
            let robot = world.placed(res);
            let scene = robot
                .arm_scene(res.grid.clone(), &world.spot_q)
                .map_err(|e| MissionError::Internal(alloc::format!("{e}")))?;
            match plan_harvest_sequence(&Pose::new(est, Default::default()), &world.left_q, &world.right_q, &scene, &res.spec) {
                Ok(plan) => {
                    actions.push(Action::Plan { feasible: true, reason: None });
                    world.plan = Some(plan);
                    Execute
                }
                Err(e) => {
                    actions.push(Action::Plan { feasible: false, reason: Some(alloc::format!("{e}")) });
                    world.plan = None;
                    world.fail_infeasible();
                    Evaluate
                }
            }
        }
        Execute => {
            let plan = world.plan.take().ok_or_else(|| MissionError::Internal("execute without a plan".into()))?;
            let robot = world.placed(res);
            let scene = robot
                .arm_scene(res.grid.clone(), &world.spot_q)
                .map_err(|e| MissionError::Internal(alloc::format!("{e}")))?;
            let noise = world.noise.clone();
            let trace = world.traj.as_mut().map(|(buf, stride)| (buf, *stride));
            let out = simulate_execution(&plan, &mut world.sim, &scene, &noise, &res.spec, trace)?;
            world.t = world.sim.t;
            let end = plan.duration();
            if let Some((q, _)) = plan.state_at(LEFT, end) {
                world.left_q = q;
            }
            if let Some((q, _)) = plan.state_at(RIGHT, end) {
                world.right_q = q;
            }
            actions.push(Action::Execute {
                hold: out.hold,
                grasp: out.grasp,
                detached: out.detached,
                failure: out.failure_cause,
            });
            world.last = Some((out.detached, out.failure_cause, out.phases));
            world.executed.push(plan);
            Evaluate
        }
        Evaluate => {
            let (success, cause, phases) = world
                .last
                .take()
                .ok_or_else(|| MissionError::Internal("evaluate without an outcome".into()))?;
            let remaining = cfg.targets.len() - world.target - 1;
            let exhausted_operator = cause == Some(FailureCause::Infeasible) && world.interventions >= cfg.max_interventions;
            let mut decision = evaluate_outcome(success, world.attempts, cfg.max_attempts, remaining);
            if exhausted_operator && decision == Decision::RetryNbv {
                decision = evaluate_outcome(success, cfg.max_attempts, cfg.max_attempts, remaining);
            }
            if world.estimate.is_none() && decision == Decision::RetryNbv {
                decision = evaluate_outcome(success, cfg.max_attempts, cfg.max_attempts, remaining);
            }
            actions.push(Action::Evaluate { success, decision });
            if decision == Decision::RetryNbv {
                world.decision = None;
                NbvMove
            } else {
                world.results.push(TargetResult {
                    target: world.target,
                    success,
                    failure_cause: cause,
                    attempts: world.attempts,
                    interventions: world.interventions,
                    phases,
                });
                world.decision = Some(decision);
                Reinit
            }
        }
        Reinit => {
            world.spot_q = res.robot.spot_home.clone();
            world.left_q = res.robot.left_stowed.clone();
            world.right_q = res.robot.right_stowed.clone();
            actions.push(Action::Reinit {
                spot: world.spot_q.clone(),
                left: world.left_q.clone(),
                right: world.right_q.clone(),
            });
            world.wait(cfg.reinit_duration);
            match world.decision.take() {
                Some(Decision::NextTarget) => {
                    world.target += 1;
                    world.attempts = 0;
                    world.interventions = 0;
                    world.estimate = None;
                    let t = world.t;
                    world.sim = SimWorld::new(
                        cfg.targets[world.target].pendulum.clone(),
                        &target_noise(&world.noise, world.target),
                        cfg.dt,
                    )?;
                    world.sim.t = t;
                    Navigate
                }
                _ => Done,
            }
        }
        Done => return Err(MissionError::IllegalTransition { from: Done, to: Done }),
    };
    if !is_legal_transition(state, next) {
        return Err(MissionError::IllegalTransition { from: state, to: next });
    }
    Ok((next, actions))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissionReport {
    pub trace: Vec<MissionEvent>,
    pub results: Vec<TargetResult>,
    pub duration: f64,
    pub spot_q: JointVector,
    pub left_q: JointVector,
    pub right_q: JointVector,
    pub trajectory: Vec<TrajSample>,
    pub executed: Vec<HarvestPlan>,
}

impl MissionReport {
    pub fn states(&self) -> Vec<MissionState> {
        let mut s: Vec<MissionState> = self.trace.iter().map(|e| e.from).collect();
        if let Some(last) = self.trace.last() {
            s.push(last.to);
        }
        s
    }

    pub fn success(&self) -> bool {
        !self.results.is_empty() && self.results.iter().all(|r| r.success)
    }
}

const MAX_TRANSITIONS: usize = 10_000;

/// Runs the state machine from `Navigate` to `Done`. With `traj_stride` set,
/// arm and fruit states are sampled every `traj_stride` steps during execution.
pub fn run_mission(
    cfg: &MissionConfig,
    res: &MissionResources,
    noise: &NoiseModel,
    traj_stride: Option<usize>,
) -> Result<MissionReport, MissionError> {
    let mut world = MissionWorld::new(cfg, res, noise)?;
    world.traj = traj_stride.map(|s| (Vec::new(), s));
    let mut state = MissionState::Navigate;
    let mut trace = Vec::new();
    while state != MissionState::Done {
        if trace.len() >= MAX_TRANSITIONS {
            return Err(MissionError::Internal("mission did not terminate".into()));
        }
        let t = world.t;
        let (target, attempt) = (world.target, world.attempts);
        let (next, actions) = advance_mission(state, &mut world, cfg, res)?;
        let attempt = if world.target == target { world.attempts } else { attempt };
        trace.push(MissionEvent { t, target, attempt, from: state, to: next, actions });
        state = next;
    }
    Ok(MissionReport {
        trace,
        results: world.results,
        duration: world.t,
        spot_q: world.spot_q,
        left_q: world.left_q,
        right_q: world.right_q,
        trajectory: world.traj.map(|(b, _)| b).unwrap_or_default(),
        executed: world.executed,
    })
}

/// Distinct phases of a plan ordered by start time.
pub fn harvest_phase_order(plan: &HarvestPlan) -> Vec<Phase> {
    let mut segs: Vec<(f64, Phase)> = plan.segments.iter().map(|s| (s.start_time(), s.phase)).collect();
    segs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Phase> = Vec::new();
    for (_, p) in segs {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// Indoor single-target configuration used by tests and the shipped scenarios.
pub fn nominal_indoor_config() -> MissionConfig {
    let mut sequence = HarvestSequenceSpec::nominal(&NominalRobot::load());
    sequence.reach.n_starts = 8;
    let pendulum = PendulumTarget::new(
        Vector3::new(1.35, 0.0, 0.95),
        0.3,
        0.2,
        0.05,
        0.04,
        Default::default(),
    )
    .expect("valid pendulum");
    MissionConfig {
        targets: vec![TargetSpec { approach: vec![[-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]], pendulum }],
        obstacles: vec![ObstacleBox { min: [1.25, -0.3, 0.95], max: [1.45, 0.3, 0.99] }],
        nbv: NbvConfig { n_starts: 8, yaw_free: false, ..NbvConfig::default() },
        sequence: Some(sequence),
        ..MissionConfig::default()
    }
}
