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
//! Occupancy-grid obstacle checks and capsule self-collision checks.

pub mod geometry;
mod grid;

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Deref;

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use grid::{grid_from_points, OccupancyGrid};

use crate::kinematics::{link_frames, ChainSpec, KinError};
use geometry::{point_segment_distance, segment_aabb_distance, segment_segment_distance};

pub const DEFAULT_VOXEL_SIZE: f64 = 0.02;
pub const DEFAULT_INFLATION: f64 = 0.01;
pub const DEFAULT_PATH_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CollisionError {
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("voxel size {0} must be positive and finite")]
    InvalidVoxelSize(f64),
    #[error("inflation {0} must be non-negative and finite")]
    InvalidInflation(f64),
    #[error("grid dimensions overflow")]
    GridTooLarge,
    #[error("bitset has {got} bytes, grid needs {expected}")]
    BitsetLength { expected: usize, got: usize },
    #[error("bitset encoding is not valid base64 or hex")]
    BadEncoding,
    #[error("unknown chain `{0}`")]
    UnknownChain(String),
    #[error("interpolation step {0} outside (0, 0.1]")]
    StepOutOfRange(f64),
    #[error("invalid capsule: {0}")]
    InvalidCapsule(String),
    #[error("invalid self-collision pair: {0}")]
    InvalidPair(String),
    #[error(transparent)]
    Kinematics(#[from] KinError),
}

/// Swept sphere around segment `a-b`, expressed in frame `link` of its chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapsuleRepr", into = "CapsuleRepr")]
pub struct Capsule {
    pub link: usize,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn new(link: usize, a: Vector3<f64>, b: Vector3<f64>, radius: f64) -> Result<Self, CollisionError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(CollisionError::InvalidCapsule(alloc::format!("radius {radius} must be positive")));
        }
        Ok(Self { link, a, b, radius })
    }
}

#[derive(Serialize, Deserialize)]
struct CapsuleRepr {
    link: usize,
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
}

impl TryFrom<CapsuleRepr> for Capsule {
    type Error = CollisionError;
    fn try_from(r: CapsuleRepr) -> Result<Self, CollisionError> {
        Capsule::new(r.link, r.a.into(), r.b.into(), r.radius)
    }
}

impl From<Capsule> for CapsuleRepr {
    fn from(c: Capsule) -> Self {
        CapsuleRepr {
            link: c.link,
            a: c.a.into(),
            b: c.b.into(),
            radius: c.radius,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CapsuleSet(pub Vec<Capsule>);

impl Deref for CapsuleSet {
    type Target = [Capsule];
    fn deref(&self) -> &[Capsule] {
        &self.0
    }
}

/// Declared pair of capsules tested against each other.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfPair {
    pub chain_a: String,
    pub capsule_a: usize,
    pub chain_b: String,
    pub capsule_b: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneRepr", into = "SceneRepr")]
pub struct CollisionScene {
    pub grid: OccupancyGrid,
    pub chains: Vec<ChainSpec>,
    pub self_pairs: Vec<SelfPair>,
}

#[derive(Serialize, Deserialize)]
struct SceneRepr {
    #[serde(default)]
    grid: OccupancyGrid,
    #[serde(default)]
    chains: Vec<ChainSpec>,
    #[serde(default)]
    self_pairs: Vec<SelfPair>,
}

impl TryFrom<SceneRepr> for CollisionScene {
    type Error = CollisionError;
    fn try_from(r: SceneRepr) -> Result<Self, CollisionError> {
        CollisionScene::new(r.grid, r.chains, r.self_pairs)
    }
}

impl From<CollisionScene> for SceneRepr {
    fn from(s: CollisionScene) -> Self {
        SceneRepr {
            grid: s.grid,
            chains: s.chains,
            self_pairs: s.self_pairs,
        }
    }
}

/// Outcome of a configuration check; the first hit found is reported.
#[derive(Clone, Debug, PartialEq)]
pub enum CollisionReport {
    Free,
    Obstacle { chain: String, capsule: usize, voxel: [usize; 3] },
    SelfContact { pair: usize },
}

impl CollisionReport {
    pub fn is_collision(&self) -> bool {
        !matches!(self, CollisionReport::Free)
    }
}

struct PosedCapsule {
    a: Vector3<f64>,
    b: Vector3<f64>,
    radius: f64,
}

impl CollisionScene {
    /// Validates pairs: both capsules must exist, and capsules on the same
    /// chain must sit on frames at least two apart.
    pub fn new(grid: OccupancyGrid, chains: Vec<ChainSpec>, self_pairs: Vec<SelfPair>) -> Result<Self, CollisionError> {
        let scene = Self { grid, chains, self_pairs };
        for p in &scene.self_pairs {
            let ca = scene.capsule(&p.chain_a, p.capsule_a)?;
            let cb = scene.capsule(&p.chain_b, p.capsule_b)?;
            if p.chain_a == p.chain_b && (ca.link as i64 - cb.link as i64).abs() <= 1 {
                return Err(CollisionError::InvalidPair(alloc::format!(
                    "capsules {} and {} of `{}` are adjacent",
                    p.capsule_a,
                    p.capsule_b,
                    p.chain_a
                )));
            }
        }
        Ok(scene)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn chain(&self, name: &str) -> Result<&ChainSpec, CollisionError> {
        self.chains
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CollisionError::UnknownChain(name.into()))
    }

    fn capsule(&self, chain: &str, idx: usize) -> Result<&Capsule, CollisionError> {
        self.chain(chain)?
            .capsules
            .get(idx)
            .ok_or_else(|| CollisionError::InvalidPair(alloc::format!("`{chain}` has no capsule {idx}")))
    }

    fn posed(chain: &ChainSpec, q: &[f64]) -> Result<Vec<PosedCapsule>, CollisionError> {
        let frames = link_frames(chain, q)?;
        Ok(chain
            .capsules
            .iter()
            .map(|c| PosedCapsule {
                a: frames[c.link].transform_point(&c.a),
                b: frames[c.link].transform_point(&c.b),
                radius: c.radius,
            })
            .collect())
    }

    fn capsule_hits_grid(&self, c: &PosedCapsule) -> Option<[usize; 3]> {
        let r = Vector3::repeat(c.radius);
        let (from, to) = self.grid.index_range(&(c.a.inf(&c.b) - r), &(c.a.sup(&c.b) + r))?;
        let half_diag = 0.5 * 3.0.sqrt() * self.grid.voxel_size();
        for z in from[2]..=to[2] {
            for y in from[1]..=to[1] {
                for x in from[0]..=to[0] {
                    let idx = [x, y, z];
                    if !self.grid.get(idx) {
                        continue;
                    }
                    let dc = point_segment_distance(&self.grid.voxel_center(idx), &c.a, &c.b);
                    if dc - half_diag > c.radius {
                        continue;
                    }
                    if dc <= c.radius {
                        return Some(idx);
                    }
                    let (lo, hi) = self.grid.voxel_bounds(idx);
                    if segment_aabb_distance(&c.a, &c.b, &lo, &hi) <= c.radius {
                        return Some(idx);
                    }
                }
            }
        }
        None
    }
}

/// Checks the assigned chains against the grid and every declared pair whose
/// chains are both assigned.
pub fn config_in_collision(scene: &CollisionScene, assignments: &[(&str, &[f64])]) -> Result<CollisionReport, CollisionError> {
    let mut posed = Vec::with_capacity(assignments.len());
    for &(name, q) in assignments {
        let chain = scene.chain(name)?;
        posed.push((chain.name.as_str(), CollisionScene::posed(chain, q)?));
    }
    check_posed(scene, &posed)
}

/// Same as [`config_in_collision`] for chains that need not be listed in the
/// scene; pairs are matched by chain name.
pub fn chains_in_collision(scene: &CollisionScene, assignments: &[(&ChainSpec, &[f64])]) -> Result<CollisionReport, CollisionError> {
    let mut posed = Vec::with_capacity(assignments.len());
    for &(chain, q) in assignments {
        posed.push((chain.name.as_str(), CollisionScene::posed(chain, q)?));
    }
    check_posed(scene, &posed)
}

fn check_posed(scene: &CollisionScene, posed: &[(&str, Vec<PosedCapsule>)]) -> Result<CollisionReport, CollisionError> {
    if !scene.grid.is_empty() {
        for (name, caps) in posed {
            for (i, c) in caps.iter().enumerate() {
                if let Some(voxel) = scene.capsule_hits_grid(c) {
                    return Ok(CollisionReport::Obstacle {
                        chain: String::from(*name),
                        capsule: i,
                        voxel,
                    });
                }
            }
        }
    }
    let lookup = |n: &str| posed.iter().find(|(m, _)| *m == n).map(|(_, c)| c);
    for (k, p) in scene.self_pairs.iter().enumerate() {
        let (Some(ca), Some(cb)) = (lookup(&p.chain_a), lookup(&p.chain_b)) else {
            continue;
        };
        let (Some(x), Some(y)) = (ca.get(p.capsule_a), cb.get(p.capsule_b)) else {
            continue;
        };
        if segment_segment_distance(&x.a, &x.b, &y.a, &y.b) <= x.radius + y.radius {
            return Ok(CollisionReport::SelfContact { pair: k });
        }
    }
    Ok(CollisionReport::Free)
}

/// Number of waypoints used to check a straight joint-space move.
pub fn waypoint_count(q_from: &[f64], q_to: &[f64], step: f64) -> usize {
    let span = q_from
        .iter()
        .zip(q_to)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    (span / step - 1e-9).max(0.0).ceil() as usize + 1
}

/// Checks linearly interpolated waypoints of one chain, both ends included.
pub fn path_in_collision(
    scene: &CollisionScene,
    chain: &str,
    q_from: &[f64],
    q_to: &[f64],
    step: f64,
) -> Result<bool, CollisionError> {
    path_in_collision_with(scene, chain, q_from, q_to, step, &[])
}

/// Like [`path_in_collision`], with other chains held fixed at the given configurations.
pub fn path_in_collision_with(
    scene: &CollisionScene,
    chain: &str,
    q_from: &[f64],
    q_to: &[f64],
    step: f64,
    fixed: &[(&str, &[f64])],
) -> Result<bool, CollisionError> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(CollisionError::StepOutOfRange(step));
    }
    let c = scene.chain(chain)?;
    c.check_dims(q_from)?;
    c.check_dims(q_to)?;
    let n = waypoint_count(q_from, q_to, step);
    let mut q = alloc::vec![0.0; q_from.len()];
    for i in 0..n {
        let s = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        for (k, v) in q.iter_mut().enumerate() {
            *v = if i + 1 == n { q_to[k] } else { q_from[k] + s * (q_to[k] - q_from[k]) };
        }
        let mut assignments: Vec<(&str, &[f64])> = fixed.to_vec();
        assignments.push((chain, &q));
        if config_in_collision(scene, &assignments)?.is_collision() {
            return Ok(true);
        }
    }
    Ok(false)
}
