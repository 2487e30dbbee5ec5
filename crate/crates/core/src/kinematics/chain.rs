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
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::KinError;
use crate::collision::CapsuleSet;
use crate::pose::Pose;

/// Revolute joint: fixed offset from the parent frame followed by a rotation about `axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct JointSpec {
    pub axis: Unit<Vector3<f64>>,
    pub origin_offset: Pose,
    pub limit_lo: f64,
    pub limit_hi: f64,
}

impl JointSpec {
    pub fn new(axis: Vector3<f64>, origin_offset: Pose, limit_lo: f64, limit_hi: f64) -> Result<Self, KinError> {
        let n = axis.norm();
        if !(n.is_finite() && n > 1e-12) {
            return Err(KinError::InvalidChain("joint axis must be non-zero".into()));
        }
        if !(limit_lo.is_finite() && limit_hi.is_finite() && limit_lo < limit_hi) {
            return Err(KinError::InvalidChain("joint limits must satisfy lo < hi".into()));
        }
        Ok(Self {
            axis: Unit::new_normalize(axis),
            origin_offset,
            limit_lo,
            limit_hi,
        })
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.limit_lo + self.limit_hi)
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.limit_lo, self.limit_hi)
    }
}

#[derive(Serialize, Deserialize)]
struct JointRepr {
    axis: [f64; 3],
    #[serde(default)]
    offset: Pose,
    lo: f64,
    hi: f64,
}

impl TryFrom<JointRepr> for JointSpec {
    type Error = KinError;
    fn try_from(r: JointRepr) -> Result<Self, KinError> {
        JointSpec::new(Vector3::from(r.axis), r.offset, r.lo, r.hi)
    }
}

impl From<JointSpec> for JointRepr {
    fn from(j: JointSpec) -> Self {
        JointRepr {
            axis: j.axis.into_inner().into(),
            offset: j.origin_offset,
            lo: j.limit_lo,
            hi: j.limit_hi,
        }
    }
}

/// Serial chain of revolute joints.
///
/// Frame `0` is `base_pose`; frame `k` (1-based) sits after the rotation of
/// joint `k - 1`. Capsules in `capsules` are attached to one of these frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainRepr", into = "ChainRepr")]
pub struct ChainSpec {
    pub name: String,
    pub base_pose: Pose,
    pub joints: Vec<JointSpec>,
    pub tool_offset: Pose,
    pub capsules: CapsuleSet,
}

impl ChainSpec {
    pub fn new(
        name: impl Into<String>,
        base_pose: Pose,
        joints: Vec<JointSpec>,
        tool_offset: Pose,
        capsules: CapsuleSet,
    ) -> Result<Self, KinError> {
        let chain = Self {
            name: name.into(),
            base_pose,
            joints,
            tool_offset,
            capsules,
        };
        chain.validate()?;
        Ok(chain)
    }

    fn validate(&self) -> Result<(), KinError> {
        if self.joints.is_empty() {
            return Err(KinError::InvalidChain("chain has no joints".into()));
        }
        for c in self.capsules.iter() {
            if c.link > self.joints.len() {
                return Err(KinError::InvalidChain(alloc::format!(
                    "capsule attached to frame {} but chain has {} joints",
                    c.link,
                    self.joints.len()
                )));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn lower_limits(&self) -> JointVector {
        JointVector(self.joints.iter().map(|j| j.limit_lo).collect())
    }

    pub fn upper_limits(&self) -> JointVector {
        JointVector(self.joints.iter().map(|j| j.limit_hi).collect())
    }

    /// Joint vector at the middle of every joint range.
    pub fn mid_config(&self) -> JointVector {
        JointVector(self.joints.iter().map(JointSpec::mid).collect())
    }

    pub fn check_dims(&self, q: &[f64]) -> Result<(), KinError> {
        if q.len() != self.joints.len() {
            return Err(KinError::DimensionMismatch {
                expected: self.joints.len(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn is_admissible(&self, q: &[f64]) -> bool {
        q.len() == self.joints.len()
            && q
                .iter()
                .zip(&self.joints)
                .all(|(v, j)| v.is_finite() && *v >= j.limit_lo && *v <= j.limit_hi)
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = j.clamp(*v);
        }
    }

    /// Same chain with its base re-expressed under `parent` (e.g. an arm riding on another arm's tool).
    pub fn mounted_on(&self, parent: &Pose) -> ChainSpec {
        let mut c = self.clone();
        c.base_pose = parent.compose(&self.base_pose);
        c
    }
}

#[derive(Serialize, Deserialize)]
struct ChainRepr {
    name: String,
    #[serde(default)]
    base_pose: Pose,
    joints: Vec<JointSpec>,
    #[serde(default)]
    tool_offset: Pose,
    #[serde(default)]
    capsules: CapsuleSet,
}

impl TryFrom<ChainRepr> for ChainSpec {
    type Error = KinError;
    fn try_from(r: ChainRepr) -> Result<Self, KinError> {
        ChainSpec::new(r.name, r.base_pose, r.joints, r.tool_offset, r.capsules)
    }
}

impl From<ChainSpec> for ChainRepr {
    fn from(c: ChainSpec) -> Self {
        ChainRepr {
            name: c.name,
            base_pose: c.base_pose,
            joints: c.joints,
            tool_offset: c.tool_offset,
            capsules: c.capsules,
        }
    }
}

/// Joint angles in radians, ordered from base to tip.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(alloc::vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn inf_distance(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn sq_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Linear blend `self + s (other - self)`.
    pub fn lerp(&self, other: &[f64], s: f64) -> JointVector {
        JointVector(
            self.0
                .iter()
                .zip(other)
                .map(|(a, b)| a + s * (b - a))
                .collect(),
        )
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for JointVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for JointVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}
