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
//! Serial-chain kinematics: forward kinematics, finite-difference Jacobians,
//! damped least-squares inverse kinematics and reachable-set sampling.

mod chain;
mod ik;
mod reach;

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Vector3};

pub use chain::{ChainSpec, JointSpec, JointVector};
pub use ik::{ik_damped_ls, ik_solve, IkConfig, IkOutcome, PoseMask};
pub use reach::{sample_reachable_set, ReachableSet};

use crate::pose::{log_map, Pose};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinError {
    #[error("joint vector has {got} entries, chain expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint vector contains a non-finite value")]
    NonFinite,
    #[error("finite-difference step {0} outside (0, 1e-2]")]
    StepOutOfRange(f64),
    #[error("inverse kinematics did not converge after {iterations} iterations (position residual {residual_pos:.3e} m, rotation residual {residual_rot:.3e} rad)")]
    NotConverged {
        iterations: usize,
        residual_pos: f64,
        residual_rot: f64,
    },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
}

fn check_input(chain: &ChainSpec, q: &[f64]) -> Result<(), KinError> {
    chain.check_dims(q)?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(KinError::NonFinite);
    }
    Ok(())
}

/// Tool-frame pose of `chain` at joint angles `q`.
pub fn forward_kinematics(chain: &ChainSpec, q: &[f64]) -> Result<Pose, KinError> {
    check_input(chain, q)?;
    Ok(fk_unchecked(chain, q))
}

pub(crate) fn fk_unchecked(chain: &ChainSpec, q: &[f64]) -> Pose {
    let mut frame = chain.base_pose;
    for (joint, &angle) in chain.joints.iter().zip(q) {
        frame = frame
            .compose(&joint.origin_offset)
            .compose(&Pose::from_axis_angle(&joint.axis, angle));
    }
    frame.compose(&chain.tool_offset)
}

/// Frames `0..=n` of the chain (base frame first, tool offset not applied).
pub fn link_frames(chain: &ChainSpec, q: &[f64]) -> Result<Vec<Pose>, KinError> {
    check_input(chain, q)?;
    let mut frames = Vec::with_capacity(q.len() + 1);
    let mut frame = chain.base_pose;
    frames.push(frame);
    for (joint, &angle) in chain.joints.iter().zip(q) {
        frame = frame
            .compose(&joint.origin_offset)
            .compose(&Pose::from_axis_angle(&joint.axis, angle));
        frames.push(frame);
    }
    Ok(frames)
}

/// 6×n Jacobian of the tool pose by central differences.
///
/// Rows 0..3 are position derivatives (m/rad), rows 3..6 the world-frame
/// rotation vector of `R(q + h) R(q - h)^T` divided by `2h`.
pub fn jacobian_numeric(chain: &ChainSpec, q: &[f64], h: f64) -> Result<DMatrix<f64>, KinError> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(KinError::StepOutOfRange(h));
    }
    check_input(chain, q)?;
    Ok(jacobian_unchecked(chain, q, h))
}

pub(crate) fn jacobian_unchecked(chain: &ChainSpec, q: &[f64], h: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut jac = DMatrix::zeros(6, n);
    let mut work: Vec<f64> = q.to_vec();
    for k in 0..n {
        work[k] = q[k] + h;
        let plus = fk_unchecked(chain, &work);
        work[k] = q[k] - h;
        let minus = fk_unchecked(chain, &work);
        work[k] = q[k];
        let dp = (plus.position - minus.position) / (2.0 * h);
        let dw = log_map(&(plus.orientation * minus.orientation.inverse())) / (2.0 * h);
        for r in 0..3 {
            jac[(r, k)] = dp[r];
            jac[(r + 3, k)] = dw[r];
        }
    }
    jac
}

/// Position rows of the numeric Jacobian (3×n), without input checks.
pub fn position_jacobian(chain: &ChainSpec, q: &[f64], h: f64) -> DMatrix<f64> {
    let n = q.len();
    let mut jac = DMatrix::zeros(3, n);
    let mut work: Vec<f64> = q.to_vec();
    for k in 0..n {
        work[k] = q[k] + h;
        let plus = fk_unchecked(chain, &work).position;
        work[k] = q[k] - h;
        let minus = fk_unchecked(chain, &work).position;
        work[k] = q[k];
        let dp: Vector3<f64> = (plus - minus) / (2.0 * h);
        for r in 0..3 {
            jac[(r, k)] = dp[r];
        }
    }
    jac
}

#[cfg(test)]
pub(crate) mod test_chains {
    use super::*;
    use crate::collision::CapsuleSet;

    /// Planar chain along x with z-axis joints.
    pub fn planar(links: &[f64]) -> ChainSpec {
        let mut joints = Vec::new();
        let mut prev = 0.0;
        for &l in links {
            joints.push(
                JointSpec::new(
                    Vector3::z(),
                    Pose::from_translation(prev, 0.0, 0.0),
                    -core::f64::consts::PI,
                    core::f64::consts::PI,
                )
                .unwrap(),
            );
            prev = l;
        }
        ChainSpec::new(
            "planar",
            Pose::identity(),
            joints,
            Pose::from_translation(prev, 0.0, 0.0),
            CapsuleSet::default(),
        )
        .unwrap()
    }

    pub fn planar2() -> ChainSpec {
        planar(&[0.3, 0.2])
    }
}

#[cfg(test)]
mod tests {
    use super::test_chains::*;
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_PI_2;

    #[test]
    fn planar_zero_config_is_straight() {
        let p = forward_kinematics(&planar2(), &[0.0, 0.0]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.5, 0.0, 0.0), epsilon = 1e-15);
        assert!(log_map(&p.orientation).norm() < 1e-15);
    }

    #[test]
    fn planar_quarter_turn() {
        let p = forward_kinematics(&planar2(), &[FRAC_PI_2, 0.0]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.0, 0.5, 0.0), epsilon = 1e-12);
        assert_relative_eq!(p.rpy().2, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert_eq!(
            forward_kinematics(&planar2(), &[0.0]),
            Err(KinError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(forward_kinematics(&planar2(), &[0.0, f64::NAN]), Err(KinError::NonFinite));
    }

    #[test]
    fn jacobian_lever_arm() {
        let j = jacobian_numeric(&planar2(), &[0.0, 0.0], 1e-6).unwrap();
        assert_relative_eq!(j[(1, 0)], 0.5, epsilon = 1e-8);
        assert_relative_eq!(j[(0, 0)], 0.0, epsilon = 1e-8);
        assert_relative_eq!(j[(1, 1)], 0.2, epsilon = 1e-8);
        assert_relative_eq!(j[(5, 0)], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_step_range() {
        let c = planar2();
        assert!(matches!(jacobian_numeric(&c, &[0.0, 0.0], 0.0), Err(KinError::StepOutOfRange(_))));
        assert!(matches!(jacobian_numeric(&c, &[0.0, 0.0], 0.02), Err(KinError::StepOutOfRange(_))));
        assert!(jacobian_numeric(&c, &[0.0, 0.0], 1e-2).is_ok());
    }

    #[test]
    fn link_frames_end_before_tool() {
        let c = planar2();
        let f = link_frames(&c, &[0.0, 0.0]).unwrap();
        assert_eq!(f.len(), 3);
        assert_relative_eq!(f[2].position, Vector3::new(0.3, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn mounting_composes_base() {
        let c = planar2().mounted_on(&Pose::from_translation(0.0, 0.0, 1.0));
        let p = forward_kinematics(&c, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.5, 0.0, 1.0), epsilon = 1e-15);
    }
}
