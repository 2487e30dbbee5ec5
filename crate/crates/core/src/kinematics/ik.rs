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
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Vector6};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{check_input, fk_unchecked, jacobian_unchecked, ChainSpec, JointVector, KinError};
use crate::pose::Pose;

/// Selects which pose components an IK target constrains.
///
/// Bits 0..3 are x, y, z. Bits 3..6 select the x, y, z components of the
/// world-frame rotation error vector, which coincide with roll, pitch and yaw
/// errors for small deviations. Leaving only the yaw bit clear admits exactly
/// the rotations that differ from the target by a turn about world z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseMask(pub u8);

impl PoseMask {
    pub const X: u8 = 1;
    pub const Y: u8 = 2;
    pub const Z: u8 = 4;
    pub const ROLL: u8 = 8;
    pub const PITCH: u8 = 16;
    pub const YAW: u8 = 32;

    pub const POSITION: PoseMask = PoseMask(0b000_111);
    pub const FULL: PoseMask = PoseMask(0b111_111);
    pub const NO_YAW: PoseMask = PoseMask(0b011_111);

    pub fn contains(self, bit_index: usize) -> bool {
        self.0 & (1 << bit_index) != 0
    }

    pub fn rows(self) -> impl Iterator<Item = usize> {
        (0..6).filter(move |&i| self.contains(i))
    }

    pub fn count(self) -> usize {
        (self.0 & 0b111_111).count_ones() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    /// Damping factor λ; the step solves `(J Jᵀ + λ² I) y = e`.
    pub damping: f64,
    /// Largest change of any joint in one iteration (rad).
    pub max_step: f64,
    pub tol_pos: f64,
    pub tol_rot: f64,
    pub max_iters: usize,
    pub fd_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_step: 0.2,
            tol_pos: 1e-4,
            tol_rot: 1e-3,
            max_iters: 200,
            fd_step: 1e-6,
        }
    }
}

/// Best iterate of an IK run, whether or not it met the tolerances.
#[derive(Clone, Debug, PartialEq)]
pub struct IkOutcome {
    pub q: JointVector,
    pub residual_pos: f64,
    pub residual_rot: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn masked_error(pose: &Pose, target: &Pose, mask: PoseMask) -> (Vector6<f64>, f64, f64) {
    let dp = target.position - pose.position;
    let dw = pose.rotation_error_to(target);
    let mut e = Vector6::zeros();
    let mut pos = 0.0;
    let mut rot = 0.0;
    for i in 0..3 {
        if mask.contains(i) {
            e[i] = dp[i];
            pos += dp[i] * dp[i];
        }
        if mask.contains(i + 3) {
            e[i + 3] = dw[i];
            rot += dw[i] * dw[i];
        }
    }
    (e, pos.sqrt(), rot.sqrt())
}

/// Runs damped least squares from `seed` and returns the best iterate.
pub fn ik_solve(
    chain: &ChainSpec,
    target: &Pose,
    seed: &[f64],
    mask: PoseMask,
    cfg: &IkConfig,
) -> Result<IkOutcome, KinError> {
    check_input(chain, seed)?;
    let rows: Vec<usize> = mask.rows().collect();
    let m = rows.len();
    let n = chain.dof();
    let mut q = JointVector(seed.to_vec());
    chain.clamp(&mut q);

    let (mut e, mut rp, mut rr) = masked_error(&fk_unchecked(chain, &q), target, mask);
    let mut best = IkOutcome {
        q: q.clone(),
        residual_pos: rp,
        residual_rot: rr,
        iterations: 0,
        converged: rp <= cfg.tol_pos && rr <= cfg.tol_rot,
    };
    if best.converged || m == 0 {
        best.converged = true;
        return Ok(best);
    }
    let lambda2 = cfg.damping * cfg.damping;
    for it in 1..=cfg.max_iters {
        let full = jacobian_unchecked(chain, &q, cfg.fd_step);
        let jm = DMatrix::from_fn(m, n, |r, c| full[(rows[r], c)]);
        let em = DVector::from_fn(m, |r, _| e[rows[r]]);
        let mut jjt = &jm * jm.transpose();
        for d in 0..m {
            jjt[(d, d)] += lambda2;
        }
        let y = match jjt.cholesky() {
            Some(ch) => ch.solve(&em),
            None => break,
        };
        let mut dq = jm.transpose() * y;
        let peak = dq.amax();
        if peak > cfg.max_step {
            dq *= cfg.max_step / peak;
        }
        for k in 0..n {
            q[k] += dq[k];
        }
        chain.clamp(&mut q);
        (e, rp, rr) = masked_error(&fk_unchecked(chain, &q), target, mask);
        let score = rp + rr;
        if score < best.residual_pos + best.residual_rot {
            best = IkOutcome {
                q: q.clone(),
                residual_pos: rp,
                residual_rot: rr,
                iterations: it,
                converged: false,
            };
        }
        if rp <= cfg.tol_pos && rr <= cfg.tol_rot {
            best = IkOutcome {
                q,
                residual_pos: rp,
                residual_rot: rr,
                iterations: it,
                converged: true,
            };
            return Ok(best);
        }
        if peak < 1e-14 {
            break;
        }
    }
    best.iterations = best.iterations.max(1);
    Ok(best)
}

/// Damped least-squares IK; fails with `NotConverged` when the masked
/// residual stays above tolerance after `cfg.max_iters` iterations.
pub fn ik_damped_ls(
    chain: &ChainSpec,
    target: &Pose,
    seed: &[f64],
    mask: PoseMask,
    cfg: &IkConfig,
) -> Result<JointVector, KinError> {
    let out = ik_solve(chain, target, seed, mask, cfg)?;
    if out.converged {
        Ok(out.q)
    } else {
        Err(KinError::NotConverged {
            iterations: cfg.max_iters,
            residual_pos: out.residual_pos,
            residual_rot: out.residual_rot,
        })
    }
}
