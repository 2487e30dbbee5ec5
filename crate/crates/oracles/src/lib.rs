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
//! Slow, direct reference computations for cross-checking the planners.
//!
//! Nothing here depends on `trimanual-core`; inputs are plain numbers.

use nalgebra::{Matrix3, Matrix4, Vector3};

/// Homogeneous transform from a translation and a row-major rotation.
pub fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

/// Rodrigues rotation about a unit axis.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Rotation matrix of a `[w, x, y, z]` quaternion, normalized first.
pub fn quat_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// One revolute joint: fixed offset from the previous frame, then rotation about `axis`.
#[derive(Clone, Debug)]
pub struct MatJoint {
    pub offset: Matrix4<f64>,
    pub axis: Vector3<f64>,
}

/// Frames `0..=n` of a serial chain by explicit matrix products; frame 0 is the base.
pub fn chain_frames(base: &Matrix4<f64>, joints: &[MatJoint], q: &[f64]) -> Vec<Matrix4<f64>> {
    let mut frames = vec![*base];
    let mut t = *base;
    for (j, qi) in joints.iter().zip(q) {
        t = t * j.offset * homogeneous(&axis_angle(&j.axis, *qi), &Vector3::zeros());
        frames.push(t);
    }
    frames
}

pub fn chain_tool(base: &Matrix4<f64>, joints: &[MatJoint], tool: &Matrix4<f64>, q: &[f64]) -> Matrix4<f64> {
    chain_frames(base, joints, q).last().copied().unwrap() * tool
}

pub fn apply(m: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let h = m * p.push(1.0);
    Vector3::new(h.x, h.y, h.z)
}

/// Dense point samples filling a capsule: rings on cross-sections along the
/// axis plus the two end caps.
pub fn capsule_samples(a: &Vector3<f64>, b: &Vector3<f64>, radius: f64, spacing: f64) -> Vec<Vector3<f64>> {
    let d = b - a;
    let len = d.norm();
    let u = if len > 1e-12 { d / len } else { Vector3::x() };
    let helper = if u.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let e1 = helper.cross(&u).normalize();
    let e2 = u.cross(&e1);
    let n_axial = (len / spacing).ceil() as usize + 1;
    let n_rad = (radius / spacing).ceil() as usize + 1;
    let mut out = Vec::new();
    for i in 0..n_axial {
        let s = if n_axial == 1 { 0.0 } else { i as f64 / (n_axial - 1) as f64 };
        let c = a + d * s;
        for ri in 0..=n_rad {
            let r = radius * ri as f64 / n_rad as f64;
            let n_ang = ((2.0 * std::f64::consts::PI * r / spacing).ceil() as usize).max(1);
            for k in 0..n_ang {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n_ang as f64;
                out.push(c + (e1 * th.cos() + e2 * th.sin()) * r);
            }
        }
    }
    let n_cap = ((std::f64::consts::PI * radius / spacing).ceil() as usize).max(2);
    for (end, sign) in [(a, -1.0), (b, 1.0)] {
        for i in 0..=n_cap {
            let polar = std::f64::consts::FRAC_PI_2 * i as f64 / n_cap as f64;
            let ring = radius * polar.sin();
            let along = radius * polar.cos() * sign;
            let n_ang = ((2.0 * std::f64::consts::PI * ring / spacing).ceil() as usize).max(1);
            for k in 0..n_ang {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n_ang as f64;
                out.push(end + u * along + (e1 * th.cos() + e2 * th.sin()) * ring);
            }
        }
    }
    out
}

/// Occupancy lookup on a raw bit array laid out x fastest, LSB first.
pub fn voxel_bit(origin: &Vector3<f64>, size: f64, dims: [usize; 3], bytes: &[u8], p: &Vector3<f64>) -> bool {
    let mut idx = [0usize; 3];
    for k in 0..3 {
        let f = ((p[k] - origin[k]) / size).floor();
        if f < 0.0 || f >= dims[k] as f64 {
            return false;
        }
        idx[k] = f as usize;
    }
    let i = idx[0] + dims[0] * (idx[1] + dims[1] * idx[2]);
    bytes[i / 8] >> (i % 8) & 1 == 1
}

/// Optimal 1D k-means cost and cluster sizes by dynamic programming over the sorted values.
pub fn kmeans_1d_exact(values: &[f64], k: usize) -> (f64, Vec<usize>, Vec<f64>) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in 0..n {
        s1[i + 1] = s1[i] + v[i];
        s2[i + 1] = s2[i] + v[i] * v[i];
    }
    // within-cluster squared error of v[i..j]
    let sse = |i: usize, j: usize| {
        let m = (j - i) as f64;
        let s = s1[j] - s1[i];
        (s2[j] - s2[i]) - s * s / m
    };
    let inf = f64::INFINITY;
    let mut dp = vec![vec![inf; n + 1]; k + 1];
    let mut arg = vec![vec![0usize; n + 1]; k + 1];
    dp[0][0] = 0.0;
    for c in 1..=k {
        for j in c..=n {
            for i in (c - 1)..j {
                let cand = dp[c - 1][i] + sse(i, j);
                if cand < dp[c][j] {
                    dp[c][j] = cand;
                    arg[c][j] = i;
                }
            }
        }
    }
    let mut sizes = vec![0; k];
    let mut centers = vec![0.0; k];
    let mut j = n;
    for c in (1..=k).rev() {
        let i = arg[c][j];
        sizes[c - 1] = j - i;
        centers[c - 1] = (s1[j] - s1[i]) / (j - i) as f64;
        j = i;
    }
    (dp[k][n], sizes, centers)
}

/// Yaw in `[0, pi)` minimizing the bounding-rectangle area of `pts` in the
/// rotated frame, long side on x, scanned in `step` increments.
pub fn min_area_yaw(pts: &[(f64, f64)], step: f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let n = (std::f64::consts::PI / step).ceil() as usize;
    for i in 0..n {
        let a = i as f64 * step;
        let (c, s) = (a.cos(), a.sin());
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts {
            let u = c * x + s * y;
            let v = -s * x + c * y;
            lo_u = lo_u.min(u);
            hi_u = hi_u.max(u);
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        let area = (hi_u - lo_u) * (hi_v - lo_v);
        // prefer the orientation whose x axis carries the long side
        let key = area + if hi_u - lo_u >= hi_v - lo_v { 0.0 } else { 1e-12 };
        if key < best.0 {
            best = (key, a);
        }
    }
    best.1
}

/// Minimum of `f` over a regular grid with `steps` points per axis, skipping
/// points where `f` returns `None`.
pub fn grid_min<F: FnMut(&[f64]) -> Option<f64>>(lo: &[f64], hi: &[f64], steps: usize, mut f: F) -> Option<(Vec<f64>, f64)> {
    let d = lo.len();
    let mut idx = vec![0usize; d];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut x = vec![0.0; d];
    loop {
        for k in 0..d {
            x[k] = if steps == 1 { lo[k] } else { lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (steps - 1) as f64 };
        }
        if let Some(v) = f(&x) {
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((x.clone(), v));
            }
        }
        let mut k = 0;
        loop {
            if k == d {
                return best;
            }
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Compass search from `x0` with step halving; `f` returns `None` outside the feasible set.
pub fn pattern_refine<F: FnMut(&[f64]) -> Option<f64>>(x0: &[f64], step0: f64, min_step: f64, mut f: F) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f(&x).unwrap_or(f64::INFINITY);
    let mut step = step0;
    while step > min_step {
        let mut improved = false;
        for k in 0..x.len() {
            for sgn in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] += sgn * step;
                if let Some(fy) = f(&y) {
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    (x, fx)
}

/// Minimum joint displacement `|q - q0|^2` over a `deg`-degree grid on
/// `[-pi, pi)^3` for a planar three-link arm whose tip must land within
/// `tol` of `goal`. Returns `None` when no grid point qualifies.
pub fn planar3_grid_min(links: [f64; 3], q0: [f64; 3], goal: (f64, f64), tol: f64, deg: f64) -> Option<([f64; 3], f64)> {
    let n = (360.0 / deg).round() as usize;
    let ang: Vec<f64> = (0..n).map(|i| -std::f64::consts::PI + i as f64 * deg.to_radians()).collect();
    let cs: Vec<(f64, f64)> = (0..n).map(|i| {
        let a = i as f64 * deg.to_radians() - std::f64::consts::PI;
        (a.cos(), a.sin())
    }).collect();
    // angle sums reduce to table lookups because every grid angle is a multiple of the step
    let sum_idx = |a: usize, b: usize| (a + b + n / 2) % n;
    let tol2 = tol * tol;
    let mut best: Option<([f64; 3], f64)> = None;
    for i in 0..n {
        let d1 = (ang[i] - q0[0]).powi(2);
        let (x1, y1) = (links[0] * cs[i].0, links[0] * cs[i].1);
        for j in 0..n {
            let d2 = d1 + (ang[j] - q0[1]).powi(2);
            if best.is_some_and(|b| d2 >= b.1) {
                continue;
            }
            let ij = sum_idx(i, j);
            let (x2, y2) = (x1 + links[1] * cs[ij].0, y1 + links[1] * cs[ij].1);
            for k in 0..n {
                let d3 = d2 + (ang[k] - q0[2]).powi(2);
                if best.is_some_and(|b| d3 >= b.1) {
                    continue;
                }
                let ijk = sum_idx(ij, k);
                let (x, y) = (x2 + links[2] * cs[ijk].0, y2 + links[2] * cs[ijk].1);
                if (x - goal.0).powi(2) + (y - goal.1).powi(2) <= tol2 {
                    best = Some(([ang[i], ang[j], ang[k]], d3));
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rodrigues_quarter_turn() {
        let r = axis_angle(&Vector3::z(), std::f64::consts::FRAC_PI_2);
        assert!((r * Vector3::x() - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn kmeans_dp_splits_two_groups() {
        let v = [0.1, 0.11, 0.12, 0.9, 0.91];
        let (_, sizes, centers) = kmeans_1d_exact(&v, 2);
        assert_eq!(sizes, vec![3, 2]);
        assert!((centers[0] - 0.11).abs() < 1e-12 && (centers[1] - 0.905).abs() < 1e-12);
    }

    #[test]
    fn grid_and_refine_find_a_bowl() {
        let f = |x: &[f64]| Some((x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2));
        let (x, _) = grid_min(&[-1.0, -1.0], &[1.0, 1.0], 11, f).unwrap();
        let (x, v) = pattern_refine(&x, 0.1, 1e-9, f);
        assert!((x[0] - 0.3).abs() < 1e-8 && (x[1] + 0.2).abs() < 1e-8 && v < 1e-15);
    }

    #[test]
    fn planar_grid_sum_table() {
        let ([a, b, c], cost) = planar3_grid_min([0.3, 0.3, 0.3], [0.0, 0.0, 0.0], (0.9, 0.0), 1e-9, 2.0).unwrap();
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12 && c.abs() < 1e-12 && cost < 1e-20);
    }

    #[test]
    fn min_area_yaw_of_rotated_rectangle() {
        let a: f64 = 0.5;
        let pts: Vec<(f64, f64)> = [(-2.0, -1.0), (2.0, -1.0), (2.0, 1.0), (-2.0, 1.0)]
            .iter()
            .map(|(x, y)| (a.cos() * x - a.sin() * y, a.sin() * x + a.cos() * y))
            .collect();
        assert!((min_area_yaw(&pts, 1e-4) - a).abs() < 2e-4);
    }

    #[test]
    fn voxel_bits_are_lsb_first() {
        let bytes = [0b0000_0010u8];
        let o = Vector3::zeros();
        assert!(voxel_bit(&o, 1.0, [2, 2, 2], &bytes, &Vector3::new(1.5, 0.5, 0.5)));
        assert!(!voxel_bit(&o, 1.0, [2, 2, 2], &bytes, &Vector3::new(0.5, 0.5, 0.5)));
        assert!(!voxel_bit(&o, 1.0, [2, 2, 2], &bytes, &Vector3::new(-0.5, 0.5, 0.5)));
    }
}
