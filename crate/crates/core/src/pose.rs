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
//! Rigid transforms with a position in meters and a unit quaternion.
//!
//! Euler angles follow the Z-Y-X (yaw, pitch, roll) convention and are used
//! for reporting and for the view cost only. Orientation errors everywhere
//! else go through the quaternion log map.

use core::f64::consts::PI;

use nalgebra::{Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Rigid-body pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: renormalize(orientation),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Builds a pose from a position and Z-Y-X Euler angles.
    pub fn from_rpy(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(position, UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    pub fn from_axis_angle(axis: &Unit<Vector3<f64>>, angle: f64) -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::from_axis_angle(axis, angle))
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    /// `(roll, pitch, yaw)` with `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn rpy(&self) -> (f64, f64, f64) {
        let m = self.orientation.to_rotation_matrix();
        let m = m.matrix();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let pitch = -(m[(2, 0)].clamp(-1.0, 1.0)).asin();
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        (roll, pitch, yaw)
    }

    /// World-frame rotation vector taking `self.orientation` onto `target`.
    pub fn rotation_error_to(&self, target: &Pose) -> Vector3<f64> {
        log_map(&(target.orientation * self.orientation.inverse()))
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// Rotation vector (axis times angle) of a unit quaternion, angle in `[0, pi]`.
pub fn log_map(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = q.quaternion();
    // shortest-arc representative
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.vector())
    } else {
        (q.w, q.vector().into_owned())
    };
    let s = v.norm();
    if s < 1e-12 {
        // first-order expansion around identity
        return v * 2.0;
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

/// Rotation whose columns are the given orthonormal axes.
pub fn quat_from_axes(x: &Vector3<f64>, y: &Vector3<f64>, z: &Vector3<f64>) -> UnitQuaternion<f64> {
    let m = nalgebra::Matrix3::from_columns(&[*x, *y, *z]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    pos: [f64; 3],
    #[serde(default = "identity_wxyz")]
    quat: [f64; 4],
}

fn identity_wxyz() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

/// Rejection reason for a malformed serialized pose.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("pose has a non-finite component or a zero quaternion")]
pub struct InvalidPose;

impl TryFrom<PoseRepr> for Pose {
    type Error = InvalidPose;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let [w, x, y, z] = r.quat;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n.is_finite() && n > 1e-12) || r.pos.iter().any(|v| !v.is_finite()) {
            return Err(InvalidPose);
        }
        Ok(Pose::new(
            Vector3::from(r.pos),
            UnitQuaternion::new_normalize(q),
        ))
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            pos: p.position.into(),
            quat: p.quat_wxyz(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_keeps_interval() {
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(0.25), 0.25);
        assert_relative_eq!(wrap_angle(-7.0), -7.0 + 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let p = Pose::from_rpy(Vector3::new(0.1, -0.2, 0.3), 0.4, -0.5, 1.2);
        let e = p.compose(&p.inverse());
        assert!(e.position.norm() < 1e-12);
        assert!(log_map(&e.orientation).norm() < 1e-12);
    }

    #[test]
    fn log_map_of_quarter_turn() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI / 2.0);
        let w = log_map(&q);
        assert_relative_eq!(w, Vector3::new(0.0, 0.0, PI / 2.0), epsilon = 1e-12);
    }

    #[test]
    fn serde_uses_pos_quat_layout() {
        let p = Pose::from_translation(1.0, 2.0, 3.0);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"pos":[1.0,2.0,3.0],"quat":[1.0,0.0,0.0,0.0]}"#);
        let back: Pose = serde_json::from_str(r#"{"pos":[0,0,0],"quat":[2,0,0,0]}"#).unwrap();
        assert_relative_eq!(back.orientation.quaternion().w, 1.0);
        assert!(serde_json::from_str::<Pose>(r#"{"pos":[0,0,0],"quat":[0,0,0,0]}"#).is_err());
    }

    proptest! {
        #[test]
        fn rpy_round_trips_away_from_gimbal_lock(
            roll in -3.1f64..3.1,
            pitch in -(PI / 2.0 - 1e-3)..(PI / 2.0 - 1e-3),
            yaw in -3.1f64..3.1,
        ) {
            let p = Pose::from_rpy(Vector3::zeros(), roll, pitch, yaw);
            let (r, pt, y) = p.rpy();
            let q = Pose::from_rpy(Vector3::zeros(), r, pt, y);
            prop_assert!(log_map(&(q.orientation * p.orientation.inverse())).norm() < 1e-9);
            prop_assert!(wrap_angle(r - roll).abs() < 1e-6);
            prop_assert!((pt - pitch).abs() < 1e-6);
            prop_assert!(wrap_angle(y - yaw).abs() < 1e-6);
        }

        #[test]
        fn compose_keeps_unit_norm(
            a in prop::array::uniform3(-3.0f64..3.0),
            b in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let mut p = Pose::from_rpy(Vector3::zeros(), a[0], a[1], a[2]);
            let step = Pose::from_rpy(Vector3::new(0.1, 0.0, 0.0), b[0], b[1], b[2]);
            for _ in 0..200 {
                p = p.compose(&step);
            }
            prop_assert!((p.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }
}
