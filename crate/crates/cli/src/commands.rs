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
use std::io::Write;

use serde::Serialize;
use trimanual_core::bimanual::{plan_harvest_sequence, BimanualError, HarvestPlan, HarvestSequenceSpec};
use trimanual_core::collision::{config_in_collision, CollisionError, CollisionScene, OccupancyGrid};
use trimanual_core::kinematics::{forward_kinematics, ChainSpec};
use trimanual_core::nbv::{self, NbvConfig, NbvError, NbvSolution};
use trimanual_core::orchestrator::{MissionEvent, TargetResult};
use trimanual_core::perception::{perceive as run_pipeline, FruitEstimate};
use trimanual_core::robot::{NominalRobot, LEFT, RIGHT};
use trimanual_core::sim::{build_resources, run_trial, run_trials_with, Scenario, SimError, TrialRecord, TrialSummary};
use trimanual_core::Pose;

use crate::formats::{self, num};
use crate::manifest::{Inputs, OutDir};
use crate::{CalibrateArgs, CliError, FkArgs, PerceiveArgs, PlanBimanualArgs, PlanNbvArgs, Preset, RunTrialsArgs, ScenarioArgs, SimulateArgs};

fn invalid(e: impl ToString) -> CliError {
    CliError::Invalid(e.to_string())
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::Internal(m) => CliError::Internal(m),
        other => invalid(other),
    }
}

fn nbv_err(e: NbvError) -> CliError {
    invalid(e)
}

fn bimanual_err(e: BimanualError) -> CliError {
    match e {
        BimanualError::Unreachable | BimanualError::NoCollisionFreeSolution | BimanualError::PhaseInfeasible { .. } => {
            CliError::Infeasible(e.to_string())
        }
        other => invalid(other),
    }
}

fn collision_err(e: CollisionError) -> CliError {
    invalid(e)
}

#[derive(Serialize)]
struct PoseOut {
    pos: [f64; 3],
    quat: [f64; 4],
    rpy: [f64; 3],
}

impl From<&Pose> for PoseOut {
    fn from(p: &Pose) -> Self {
        let q = p.orientation;
        let (r, pi, y) = p.rpy();
        PoseOut {
            pos: p.position.into(),
            quat: [q.w, q.i, q.j, q.k],
            rpy: [r, pi, y],
        }
    }
}

pub fn fk(a: &FkArgs) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let chain: ChainSpec = inputs.json(&a.chain)?;
    let rows = match (&a.q, &a.batch) {
        (Some(q), _) => vec![formats::parse_q(q)?],
        (None, Some(b)) => formats::parse_q_rows(&inputs.read_string(b)?)?,
        (None, None) => return Err(invalid("either --q or --batch is required")),
    };
    let mut lines = String::new();
    for (i, q) in rows.iter().enumerate() {
        let pose = forward_kinematics(&chain, q).map_err(|e| invalid(format!("row {}: {e}", i + 1)))?;
        lines.push_str(&serde_json::to_string(&PoseOut::from(&pose)).map_err(|e| CliError::Internal(e.to_string()))?);
        lines.push('\n');
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(lines.as_bytes()).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn plan_nbv(a: &PlanNbvArgs, args: &[String]) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let scene: CollisionScene = match &a.scene {
        Some(p) => inputs.json(p)?,
        None => {
            let robot = NominalRobot::load();
            CollisionScene::new(OccupancyGrid::empty(), vec![robot.spot], Vec::new()).map_err(collision_err)?
        }
    };
    let target: Pose = inputs.json(&a.target)?;
    let mut cfg: NbvConfig = match &a.config {
        Some(p) => inputs.json(p)?,
        None => NbvConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let chain = scene.chain(&a.chain).map_err(collision_err)?.clone();
    let out = OutDir::create(&a.out, &inputs.into_manifest("plan-nbv", args, Some(cfg.seed), &a.out))?;

    let sol = nbv::plan_nbv(&chain, &scene, &target, &cfg).map_err(nbv_err)?;
    if sol.feasible {
        check_view(&chain, &scene, &target, &cfg, &sol)?;
    }
    out.write_json("nbv_solution.json", &sol)?;
    let mut header = vec!["chain".to_string()];
    header.extend((0..sol.q.0.len()).map(|i| format!("q{i}")));
    header.extend(["x", "y", "z", "roll", "pitch", "yaw", "cost", "standoff", "feasible"].map(String::from));
    let (r, p, y) = sol.pose.rpy();
    let mut row = vec![a.chain.clone()];
    row.extend(sol.q.0.iter().map(|v| num(*v)));
    row.extend([sol.pose.position.x, sol.pose.position.y, sol.pose.position.z, r, p, y, sol.cost, sol.standoff].map(num));
    row.push(sol.feasible.to_string());
    out.write("waypoint.csv", &formats::csv_table(&header, &[row])?)?;
    if !sol.feasible {
        return Err(CliError::Infeasible(format!(
            "no viewpoint satisfies the standoff, joint limits and collision constraints (best standoff {:.4} m)",
            sol.standoff
        )));
    }
    Ok(())
}

/// Re-checks a solution reported as feasible.
fn check_view(chain: &ChainSpec, scene: &CollisionScene, target: &Pose, cfg: &NbvConfig, sol: &NbvSolution) -> Result<(), CliError> {
    let pose = forward_kinematics(chain, &sol.q).map_err(|e| CliError::Internal(e.to_string()))?;
    let standoff = (pose.position - target.position).norm();
    let hit = config_in_collision(scene, &[(chain.name.as_str(), sol.q.as_slice())])
        .map_err(|e| CliError::Internal(e.to_string()))?
        .is_collision();
    if hit || !chain.is_admissible(&sol.q) || standoff < cfg.d_min - 1e-9 {
        return Err(CliError::Internal("planner returned a viewpoint that violates its constraints".into()));
    }
    Ok(())
}

pub fn plan_bimanual(a: &PlanBimanualArgs, args: &[String]) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let robot = NominalRobot::load();
    let scene: CollisionScene = match &a.scene {
        Some(p) => inputs.json(p)?,
        None => robot.arm_scene(OccupancyGrid::empty(), &robot.spot_home).map_err(collision_err)?,
    };
    let fruit: Pose = inputs.json(&a.fruit)?;
    let spec: HarvestSequenceSpec = match &a.spec {
        Some(p) => inputs.json(p)?,
        None => HarvestSequenceSpec::nominal(&robot),
    };
    let q_left = a.q_left.as_deref().map(formats::parse_q).transpose()?.unwrap_or_else(|| robot.left_stowed.0.clone());
    let q_right = a.q_right.as_deref().map(formats::parse_q).transpose()?.unwrap_or_else(|| robot.right_stowed.0.clone());
    let out = OutDir::create(&a.out, &inputs.into_manifest("plan-bimanual", args, Some(spec.reach.seed), &a.out))?;

    let plan = plan_harvest_sequence(&fruit, &q_left, &q_right, &scene, &spec).map_err(bimanual_err)?;
    check_plan(&scene, &plan)?;
    out.write_json("plan.json", &plan)?;
    out.write("sequence.csv", &formats::sequence_csv(&plan)?)
}

/// Both arms at every waypoint time must be clear of the scene and of each other.
fn check_plan(scene: &CollisionScene, plan: &HarvestPlan) -> Result<(), CliError> {
    let mut times: Vec<f64> = plan.segments.iter().flat_map(|s| s.waypoints.iter().map(|w| w.t)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for t in times {
        let (Some((ql, _)), Some((qr, _))) = (plan.state_at(LEFT, t), plan.state_at(RIGHT, t)) else {
            continue;
        };
        let rep = config_in_collision(scene, &[(LEFT, ql.as_slice()), (RIGHT, qr.as_slice())])
            .map_err(|e| CliError::Internal(e.to_string()))?;
        if rep.is_collision() {
            return Err(CliError::Internal(format!("planned sequence collides at t = {t}: {rep:?}")));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateOut {
    centroid: [f64; 3],
    sphere_center: [f64; 3],
    pose: PoseOut,
    extent: [f64; 3],
    point_count: usize,
    mean_range: f64,
    degenerate: bool,
}

impl From<&FruitEstimate> for EstimateOut {
    fn from(e: &FruitEstimate) -> Self {
        EstimateOut {
            centroid: e.centroid.into(),
            sphere_center: e.sphere_center().into(),
            pose: PoseOut::from(&e.pose()),
            extent: e.extent.into(),
            point_count: e.point_count,
            mean_range: e.mean_range,
            degenerate: e.degenerate,
        }
    }
}

pub fn perceive(a: &PerceiveArgs, args: &[String]) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let meta: formats::DepthMeta = inputs.json(&a.meta)?;
    let raw = inputs.read(&a.depth)?;
    let mut masks = Vec::with_capacity(a.mask.len());
    for p in &a.mask {
        masks.push(formats::decode_pgm(&inputs.read(p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?);
    }
    let frame = formats::depth_frame(&meta, &raw)?;
    let color = meta.color.unwrap_or(meta.depth);
    let dets = formats::detections(masks);
    let out = OutDir::create(&a.out, &inputs.into_manifest("perceive", args, None, &a.out))?;

    let est = run_pipeline(&frame, &color, &dets, a.outlier_sigma).map_err(invalid)?;
    let json: Vec<EstimateOut> = est.iter().map(EstimateOut::from).collect();
    out.write_json("estimates.json", &json)?;
    out.write("estimates.csv", &formats::estimates_csv(&est)?)
}

fn load_scenario(inputs: &mut Inputs, path: &std::path::Path) -> Result<Scenario, CliError> {
    let s = inputs.read_string(path)?;
    Scenario::from_json(&s).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SimulationOut<'a> {
    record: &'a TrialRecord,
    targets: &'a [TargetResult],
}

pub fn simulate(a: &SimulateArgs, args: &[String]) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let scenario = load_scenario(&mut inputs, &a.scenario)?;
    if a.stride == 0 {
        return Err(invalid("--stride must be at least 1"));
    }
    let out = OutDir::create(&a.out, &inputs.into_manifest("simulate", args, Some(a.seed), &a.out))?;

    let res = build_resources(&scenario).map_err(sim_err)?;
    let stride = a.dump_traj.then_some(a.stride);
    let (record, report) = run_trial(&scenario, &res, 0, a.seed, stride).map_err(sim_err)?;
    out.write_json("outcome.json", &SimulationOut { record: &record, targets: &report.results })?;
    out.write("trace.jsonl", &trace_lines(&report.trace)?)?;
    if a.dump_traj {
        out.write("ee_trajectory.csv", &formats::pose_trajectory_csv(&report.trajectory)?)?;
        out.write("joint_trajectory.csv", &formats::joint_trajectory_csv(&report.trajectory)?)?;
    }
    Ok(())
}

fn trace_lines(trace: &[MissionEvent]) -> Result<Vec<u8>, CliError> {
    let mut s = String::new();
    for ev in trace {
        s.push_str(&serde_json::to_string(ev).map_err(|e| CliError::Internal(e.to_string()))?);
        s.push('\n');
    }
    Ok(s.into_bytes())
}

#[derive(Serialize)]
struct SummaryOut<'a> {
    scenario: &'a str,
    base_seed: u64,
    #[serde(flatten)]
    summary: &'a TrialSummary,
}

pub fn run_trials(a: &RunTrialsArgs, args: &[String]) -> Result<(), CliError> {
    let mut inputs = Inputs::default();
    let scenario = load_scenario(&mut inputs, &a.scenario)?;
    if a.trials == 0 {
        return Err(invalid("--trials must be at least 1"));
    }
    let out = OutDir::create(&a.out, &inputs.into_manifest("run-trials", args, Some(a.seed), &a.out))?;

    let res = build_resources(&scenario).map_err(sim_err)?;
    let batch = run_trials_with(&scenario, &res, a.trials, a.seed).map_err(sim_err)?;
    out.write("trials.csv", &formats::trials_csv(&batch.records)?)?;
    out.write_json(
        "summary.json",
        &SummaryOut {
            scenario: &scenario.name,
            base_seed: a.seed,
            summary: &batch.summary,
        },
    )
}

#[derive(Serialize)]
struct CalibrationOut {
    target: f64,
    slip: f64,
    trials: usize,
    base_seed: u64,
    wind_amplitude: f64,
    pose_noise_sigma: f64,
    success_rate: f64,
}

pub fn calibrate(a: &CalibrateArgs, args: &[String]) -> Result<(), CliError> {
    let winds = formats::parse_q(&a.wind)?;
    let sigmas = formats::parse_q(&a.sigma)?;
    if !(0.0..=1.0).contains(&a.target) {
        return Err(invalid("--target must lie in [0, 1]"));
    }
    if a.trials == 0 {
        return Err(invalid("--trials must be at least 1"));
    }
    let out = OutDir::create(&a.out, &Inputs::default().into_manifest("calibrate", args, Some(a.seed), &a.out))?;

    let probe = Scenario::nominal_outdoor(0.0, 0.0, a.slip);
    let res = build_resources(&probe).map_err(sim_err)?;
    let mut rows = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for &w in &winds {
        for &s in &sigmas {
            let sc = Scenario::nominal_outdoor(w, s, a.slip);
            sc.validate().map_err(sim_err)?;
            let rate = run_trials_with(&sc, &res, a.trials, a.seed).map_err(sim_err)?.summary.success_rate;
            rows.push(vec![num(w), num(s), num(rate), num((rate - a.target).abs())]);
            if best.is_none_or(|(_, _, r)| (rate - a.target).abs() < (r - a.target).abs()) {
                best = Some((w, s, rate));
            }
        }
    }
    let header = ["wind_amplitude", "pose_noise_sigma", "success_rate", "abs_error"].map(String::from);
    out.write("calibration.csv", &formats::csv_table(&header, &rows)?)?;
    let (w, s, rate) = best.ok_or_else(|| invalid("empty search grid"))?;
    out.write_json(
        "calibration.json",
        &CalibrationOut {
            target: a.target,
            slip: a.slip,
            trials: a.trials,
            base_seed: a.seed,
            wind_amplitude: w,
            pose_noise_sigma: s,
            success_rate: rate,
        },
    )?;
    out.write_json("outdoor.json", &Scenario::nominal_outdoor(w, s, a.slip))
}

pub fn scenario(a: &ScenarioArgs, args: &[String]) -> Result<(), CliError> {
    let mut sc = match a.preset {
        Preset::Indoor => Scenario::nominal_indoor(a.slip),
        Preset::Outdoor => Scenario::nominal_outdoor(a.wind, a.sigma, a.slip),
    };
    if let Some(n) = &a.name {
        sc.name = n.clone();
    }
    sc.validate().map_err(sim_err)?;
    if sc.name.is_empty() || !sc.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(invalid(format!("scenario name `{}` must be non-empty and use only [A-Za-z0-9_-]", sc.name)));
    }
    let out = OutDir::create(&a.out, &Inputs::default().into_manifest("scenario", args, None, &a.out))?;
    out.write_json(&format!("{}.json", sc.name), &sc)
}
