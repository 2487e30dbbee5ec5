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
//! Nominal chain definitions for the base arm and the two small arms.
//!
//! The small arms are described relative to the base arm's tool frame and are
//! placed in the world with [`NominalRobot::mounted_arms`].

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::collision::{CollisionError, CollisionScene, OccupancyGrid, SelfPair};
use crate::kinematics::{fk_unchecked, ChainSpec, JointVector, KinError};
use crate::pose::Pose;

pub const NOMINAL_ROBOT_JSON: &str = include_str!("../data/nominal_robot.json");

pub const SPOT: &str = "spot";
pub const LEFT: &str = "left";
pub const RIGHT: &str = "right";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NominalRobot {
    pub version: u32,
    pub spot: ChainSpec,
    pub left: ChainSpec,
    pub right: ChainSpec,
    pub spot_home: JointVector,
    pub left_stowed: JointVector,
    pub right_stowed: JointVector,
    pub left_extended: JointVector,
    pub right_extended: JointVector,
    #[serde(default)]
    pub self_pairs: Vec<SelfPair>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RobotError {
    #[error("robot description is not valid JSON: {0}")]
    Parse(String),
    #[error("robot description: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kinematics(#[from] KinError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
}

impl NominalRobot {
    /// The description shipped with the crate.
    pub fn load() -> Self {
        Self::from_json(NOMINAL_ROBOT_JSON).expect("embedded robot description is valid")
    }

    pub fn from_json(s: &str) -> Result<Self, RobotError> {
        let r: NominalRobot = serde_json::from_str(s).map_err(|e| RobotError::Parse(alloc::format!("{e}")))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RobotError> {
        let dofs = [(&self.spot, SPOT, 6), (&self.left, LEFT, 4), (&self.right, RIGHT, 3)];
        for (c, name, n) in dofs {
            if c.name != name || c.dof() != n {
                return Err(RobotError::Invalid(alloc::format!("chain `{name}` must have {n} joints")));
            }
        }
        for (c, q) in [
            (&self.spot, &self.spot_home),
            (&self.left, &self.left_stowed),
            (&self.left, &self.left_extended),
            (&self.right, &self.right_stowed),
            (&self.right, &self.right_extended),
        ] {
            if !c.is_admissible(q) {
                return Err(RobotError::Invalid(alloc::format!("preset for `{}` violates joint limits", c.name)));
            }
        }
        self.arm_scene(OccupancyGrid::empty(), &self.spot_home)?;
        Ok(())
    }

    /// Copy with the base arm mounted on a body pose in the world.
    pub fn placed(&self, body: &Pose) -> NominalRobot {
        let mut r = self.clone();
        r.spot = self.spot.mounted_on(body);
        r
    }

    /// Tool pose of the base arm, which is also the mount frame of both small arms.
    pub fn mount_pose(&self, spot_q: &[f64]) -> Pose {
        fk_unchecked(&self.spot, spot_q)
    }

    /// Left and right chains expressed in the world for a base-arm configuration.
    pub fn mounted_arms(&self, spot_q: &[f64]) -> (ChainSpec, ChainSpec) {
        let mount = self.mount_pose(spot_q);
        (self.left.mounted_on(&mount), self.right.mounted_on(&mount))
    }

    /// Scene holding the mounted small arms and the declared arm-arm pairs.
    pub fn arm_scene(&self, grid: OccupancyGrid, spot_q: &[f64]) -> Result<CollisionScene, CollisionError> {
        let (l, r) = self.mounted_arms(spot_q);
        CollisionScene::new(grid, alloc::vec![l, r], self.self_pairs.clone())
    }
}
