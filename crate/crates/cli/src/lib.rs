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
//! Command-line front end: planners, perception, simulation and trial
//! batches over JSON configs, with CSV/JSON results and a run manifest in the
//! output directory.
//!
//! Exit codes: 0 success, 2 infeasible plan, 3 invalid input, 4 internal
//! invariant breach.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod formats;
pub mod manifest;

pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Infeasible(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "trimanual", version, about = "Tri-manual fruit harvesting planner and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tool pose of a chain, one JSON line per joint vector.
    Fk(FkArgs),
    /// Base-arm viewpoint for a target.
    PlanNbv(PlanNbvArgs),
    /// Six-phase dual-arm harvest sequence for a fruit pose.
    PlanBimanual(PlanBimanualArgs),
    /// Fruit poses from a raw depth image and detection masks.
    Perceive(PerceiveArgs),
    /// One mission of a scenario, optionally dumping trajectories.
    Simulate(SimulateArgs),
    /// A batch of seeded missions.
    RunTrials(RunTrialsArgs),
    /// Grid search of outdoor wind and pose noise against a success rate.
    Calibrate(CalibrateArgs),
    /// Writes a preset scenario file.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct FkArgs {
    /// Chain JSON.
    #[arg(long)]
    pub chain: PathBuf,
    /// Joint angles, comma separated.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "batch", required_unless_present = "batch")]
    pub q: Option<String>,
    /// File with one joint vector per line.
    #[arg(long)]
    pub batch: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanNbvArgs {
    /// Collision scene JSON; the nominal base arm in free space when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Name of the chain to move.
    #[arg(long, default_value = "spot")]
    pub chain: String,
    /// Target pose JSON (`{"pos": [x, y, z]}` is enough).
    #[arg(long)]
    pub target: PathBuf,
    /// View configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's multi-start seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanBimanualArgs {
    /// Scene with `left` and `right` chains; the nominal arms at the base
    /// arm's home configuration when absent.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Fruit pose JSON.
    #[arg(long)]
    pub fruit: PathBuf,
    /// Harvest sequence JSON.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Left start configuration; stowed when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub q_left: Option<String>,
    /// Right start configuration; stowed when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub q_right: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PerceiveArgs {
    /// Little-endian u16 depth image, row major.
    #[arg(long)]
    pub depth: PathBuf,
    /// Intrinsics and extrinsics sidecar JSON.
    #[arg(long)]
    pub meta: PathBuf,
    /// Binary PGM detection mask; repeat once per detection.
    #[arg(long)]
    pub mask: Vec<PathBuf>,
    #[arg(long, default_value_t = trimanual_core::perception::DEFAULT_OUTLIER_SIGMA)]
    pub outlier_sigma: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write end-effector, target and joint trajectories.
    #[arg(long)]
    pub dump_traj: bool,
    /// Physics steps between trajectory samples.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunTrialsArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Trial `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Success rate to match.
    #[arg(long, default_value_t = 0.4)]
    pub target: f64,
    /// Wind amplitudes to try (m/s^2), comma separated.
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4")]
    pub wind: String,
    /// Pose noise levels to try (m), comma separated.
    #[arg(long, default_value = "0,0.005,0.01,0.015,0.02")]
    pub sigma: String,
    #[arg(long, default_value_t = 0.1)]
    pub slip: f64,
    /// Missions per grid point.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Indoor,
    Outdoor,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    #[arg(long, default_value_t = 0.1)]
    pub slip: f64,
    /// Outdoor only.
    #[arg(long, default_value_t = 0.0)]
    pub wind: f64,
    /// Outdoor only.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Scenario name; the preset name when absent.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command. `args` are the raw arguments after the program
/// name and go into the manifest verbatim.
pub fn run(cli: &Cli, args: &[String]) -> Result<(), CliError> {
    match &cli.command {
        Command::Fk(a) => commands::fk(a),
        Command::PlanNbv(a) => commands::plan_nbv(a, args),
        Command::PlanBimanual(a) => commands::plan_bimanual(a, args),
        Command::Perceive(a) => commands::perceive(a, args),
        Command::Simulate(a) => commands::simulate(a, args),
        Command::RunTrials(a) => commands::run_trials(a, args),
        Command::Calibrate(a) => commands::calibrate(a, args),
        Command::Scenario(a) => commands::scenario(a, args),
    }
}

/// Parses `argv` (program name first), runs, reports and returns the exit code.
pub fn main_with(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, argv.get(1..).unwrap_or_default()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("trimanual: {e}");
            e.exit_code()
        }
    }
}
