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
//! Synthetic depth frames and point sets with known ground truth.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DepthFrame, DetectionSet, Intrinsics, Mask};
use crate::pose::Pose;

/// Sphere in the camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereTarget {
    pub center: Vector3<f64>,
    pub radius: f64,
}

fn ray_hit(dir: &Vector3<f64>, s: &SphereTarget) -> Option<f64> {
    let a = dir.norm_squared();
    let b = dir.dot(&s.center);
    let c = s.center.norm_squared() - s.radius * s.radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (b - disc.sqrt()) / a;
    (t > 0.0).then_some(t)
}

/// Conservative pixel rectangle `[u0, u1) x [v0, v1)` covering a sphere's image.
fn pixel_bounds(intr: &Intrinsics, s: &SphereTarget) -> (u32, u32, u32, u32) {
    let c = s.center;
    let r = s.radius;
    if c.z - r <= 1e-9 {
        return (0, intr.width, 0, intr.height);
    }
    let span = |x: f64, f: f64, c0: f64, n: u32| {
        let cands = [(x - r) / (c.z - r), (x - r) / (c.z + r), (x + r) / (c.z - r), (x + r) / (c.z + r)];
        let lo = cands.iter().cloned().fold(f64::INFINITY, f64::min) * f + c0;
        let hi = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * f + c0;
        let a = (lo.floor() - 1.0).clamp(0.0, n as f64) as u32;
        let b = (hi.ceil() + 2.0).clamp(0.0, n as f64) as u32;
        (a, b)
    };
    let (u0, u1) = span(c.x, intr.fx, intr.cx, intr.width);
    let (v0, v1) = span(c.y, intr.fy, intr.cy, intr.height);
    (u0, u1, v0, v1)
}

/// Renders spheres into a depth frame with identity extrinsics and one exact
/// mask per sphere. Pixels with no hit get `background_z` or stay invalid.
pub fn render_spheres(
    intr: &Intrinsics,
    spheres: &[SphereTarget],
    background_z: Option<f64>,
) -> (DepthFrame, DetectionSet) {
    let to_units = |z: f64| (z / intr.depth_scale).round().clamp(0.0, u16::MAX as f64) as u16;
    let fill = background_z.map_or(0, to_units);
    let mut data = vec![fill; intr.len()];
    let mut masks: Vec<Mask> = spheres.iter().map(|_| Mask::empty(intr.width, intr.height)).collect();
    let mut zbuf = vec![f64::INFINITY; intr.len()];
    let mut owner = vec![usize::MAX; intr.len()];
    for (k, s) in spheres.iter().enumerate() {
        let (u0, u1, v0, v1) = pixel_bounds(intr, s);
        for v in v0..v1 {
            for u in u0..u1 {
                let dir = Vector3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
                let i = (v * intr.width + u) as usize;
                if let Some(t) = ray_hit(&dir, s) {
                    if t < zbuf[i] {
                        zbuf[i] = t;
                        owner[i] = k;
                    }
                }
            }
        }
    }
    for (i, &k) in owner.iter().enumerate() {
        if k != usize::MAX {
            data[i] = to_units(zbuf[i]);
            masks[k].data[i] = true;
        }
    }
    let frame = DepthFrame { data, intrinsics: *intr, extrinsics_to_color: Pose::identity() };
    (frame, DetectionSet { masks })
}

/// Uniform samples on the surface of a box with edge lengths `dims`, centered
/// on `pose`.
pub fn sample_box_surface<R: Rng>(dims: [f64; 3], pose: &Pose, n: usize, rng: &mut R) -> Vec<Vector3<f64>> {
    let areas = [dims[1] * dims[2], dims[0] * dims[2], dims[0] * dims[1]];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut axis = 2;
            for (k, a) in areas.iter().enumerate() {
                if pick < *a {
                    axis = k;
                    break;
                }
                pick -= a;
            }
            let mut p = Vector3::zeros();
            for k in 0..3 {
                p[k] = if k == axis {
                    if rng.random::<bool>() { 0.5 } else { -0.5 }
                } else {
                    rng.random::<f64>() - 0.5
                } * dims[k];
            }
            pose.transform_point(&p)
        })
        .collect()
}
