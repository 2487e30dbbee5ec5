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
//! Depth alignment, masked back-projection, range clustering and box fitting.
//!
//! All 3D quantities are in the color camera's optical frame: x right, y down,
//! z forward.

pub mod synth;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::pose::{quat_from_axes, Pose};

pub const DEFAULT_OUTLIER_SIGMA: f64 = 2.5;
pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;
const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerceptionError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("empty input")]
    EmptyInput,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("k = {k} exceeds the number of points ({n})")]
    KExceedsPoints { k: usize, n: usize },
    #[error("outlier sigma must be positive")]
    InvalidSigma,
}

/// Pinhole intrinsics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

impl Intrinsics {
    /// 640x480 camera with a 615 px focal length.
    pub fn vga() -> Self {
        Self {
            fx: 615.0,
            fy: 615.0,
            cx: 319.5,
            cy: 239.5,
            width: 640,
            height: 480,
            depth_scale: DEFAULT_DEPTH_SCALE,
        }
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(PerceptionError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(PerceptionError::InvalidIntrinsics("resolution must be at least 1x1"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(PerceptionError::InvalidIntrinsics("principal point outside the image"));
        }
        if !(self.depth_scale > 0.0 && self.depth_scale.is_finite()) {
            return Err(PerceptionError::InvalidIntrinsics("depth scale must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point at pixel `(u, v)` with depth `z` meters.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Continuous pixel coordinates of a point in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Nearest integer pixel, if inside the image.
    pub fn pixel_of(&self, p: &Vector3<f64>) -> Option<(u32, u32)> {
        let (u, v) = self.project(p)?;
        let (u, v) = ((u + 0.5).floor(), (v + 0.5).floor());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as u32, v as u32))
    }
}

/// Raw depth image with its camera model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthFrame {
    /// Row-major depth units, 0 marks an invalid pixel.
    pub data: Vec<u16>,
    pub intrinsics: Intrinsics,
    /// Maps depth-camera points into the color camera frame.
    #[serde(default)]
    pub extrinsics_to_color: Pose,
}

impl DepthFrame {
    pub fn new(data: Vec<u16>, intrinsics: Intrinsics, extrinsics_to_color: Pose) -> Result<Self, PerceptionError> {
        intrinsics.validate()?;
        if data.len() != intrinsics.len() {
            return Err(PerceptionError::ShapeMismatch {
                expected: (intrinsics.width, intrinsics.height),
                got: (data.len() as u32, 1),
            });
        }
        Ok(Self { data, intrinsics, extrinsics_to_color })
    }
}

/// Binary mask at color resolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![false; width as usize * height as usize] }
    }

    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[(v * self.width + u) as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        self.data[(v * self.width + u) as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

/// Detector output for one color frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub masks: Vec<Mask>,
}

impl DetectionSet {
    pub fn count(&self) -> usize {
        self.masks.len()
    }

    pub fn validate(&self, intr: &Intrinsics) -> Result<(), PerceptionError> {
        for m in &self.masks {
            check_shape(intr, m.width, m.height, m.data.len())?;
        }
        Ok(())
    }

    /// Pixels covered by at least one mask.
    pub fn union(&self, width: u32, height: u32) -> Mask {
        let mut out = Mask::empty(width, height);
        for m in &self.masks {
            for (o, b) in out.data.iter_mut().zip(&m.data) {
                *o |= *b;
            }
        }
        out
    }
}

fn check_shape(intr: &Intrinsics, w: u32, h: u32, len: usize) -> Result<(), PerceptionError> {
    if w != intr.width || h != intr.height || len != intr.len() {
        return Err(PerceptionError::ShapeMismatch {
            expected: (intr.width, intr.height),
            got: (w, h),
        });
    }
    Ok(())
}

/// Reprojects a depth frame into the color camera, keeping the nearest depth
/// per target pixel. Unmapped pixels are 0.
pub fn align_depth_to_color(depth: &DepthFrame, color: &Intrinsics) -> Vec<u16> {
    let di = &depth.intrinsics;
    let mut out = vec![0u16; color.len()];
    for v in 0..di.height {
        for u in 0..di.width {
            let d = depth.data[(v * di.width + u) as usize];
            if d == 0 {
                continue;
            }
            let p = di.backproject(u as f64, v as f64, d as f64 * di.depth_scale);
            let pc = depth.extrinsics_to_color.transform_point(&p);
            let Some((tu, tv)) = color.pixel_of(&pc) else {
                continue;
            };
            let units = (pc.z / color.depth_scale).round();
            if !(1.0..=u16::MAX as f64).contains(&units) {
                continue;
            }
            let slot = &mut out[(tv * color.width + tu) as usize];
            let units = units as u16;
            if *slot == 0 || units < *slot {
                *slot = units;
            }
        }
    }
    out
}

/// 3D points of the masked pixels with valid depth, in row-major pixel order.
pub fn backproject_masked_cloud(
    aligned: &[u16],
    mask: &Mask,
    intr: &Intrinsics,
) -> Result<Vec<Vector3<f64>>, PerceptionError> {
    check_shape(intr, mask.width, mask.height, mask.data.len())?;
    if aligned.len() != intr.len() {
        return Err(PerceptionError::ShapeMismatch {
            expected: (intr.width, intr.height),
            got: (aligned.len() as u32, 1),
        });
    }
    let mut pts = Vec::new();
    for v in 0..intr.height {
        for u in 0..intr.width {
            let i = (v * intr.width + u) as usize;
            if mask.data[i] && aligned[i] != 0 {
                pts.push(intr.backproject(u as f64, v as f64, aligned[i] as f64 * intr.depth_scale));
            }
        }
    }
    Ok(pts)
}

/// One range cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeCluster {
    /// Indices into the input point list.
    pub indices: Vec<usize>,
    pub points: Vec<Vector3<f64>>,
    /// Mean range of the kept points, or the final k-means center if none were kept.
    pub mean_range: f64,
    pub std_range: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Exactly `k` clusters in ascending mean range.
    pub clusters: Vec<RangeCluster>,
    /// Cluster index per input point, `None` for discarded outliers.
    pub labels: Vec<Option<usize>>,
    pub discarded: usize,
}

/// Centers of a 1D k-means run on sorted-quantile seeds.
pub fn kmeans_1d(values: &[f64], k: usize) -> (Vec<f64>, Vec<usize>) {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centers: Vec<f64> = (0..k)
        .map(|j| {
            let idx = (((j as f64 + 0.5) / k as f64) * n as f64).floor() as usize;
            sorted[idx.min(n - 1)]
        })
        .collect();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, r) in values.iter().enumerate() {
            let mut best = 0;
            for j in 1..k {
                if (r - centers[j]).abs() < (r - centers[best]).abs() {
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for (i, r) in values.iter().enumerate() {
            sum[assign[i]] += r;
            cnt[assign[i]] += 1;
        }
        for j in 0..k {
            if cnt[j] > 0 {
                centers[j] = sum[j] / cnt[j] as f64;
            }
        }
    }
    (centers, assign)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

/// Splits points into `k` groups by distance from the camera, then drops
/// points more than `outlier_sigma` standard deviations from their group mean.
pub fn range_histogram_cluster(
    points: &[Vector3<f64>],
    k: usize,
    outlier_sigma: f64,
) -> Result<Clustering, PerceptionError> {
    if points.is_empty() {
        return Err(PerceptionError::EmptyInput);
    }
    if k == 0 {
        return Err(PerceptionError::InvalidK);
    }
    if k > points.len() {
        return Err(PerceptionError::KExceedsPoints { k, n: points.len() });
    }
    if !(outlier_sigma > 0.0) {
        return Err(PerceptionError::InvalidSigma);
    }
    let ranges: Vec<f64> = points.iter().map(|p| p.norm()).collect();
    let (centers, assign) = kmeans_1d(&ranges, k);

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut raw: Vec<RangeCluster> = Vec::with_capacity(k);
    for (j, center) in centers.iter().enumerate() {
        let assign = &assign;
        let ranges_ref = &ranges;
        let (mean, std, _) = mean_std((0..points.len()).filter(move |&i| assign[i] == j).map(move |i| ranges_ref[i]));
        let kept: Vec<usize> = (0..points.len())
            .filter(|&i| assign[i] == j && (ranges[i] - mean).abs() <= outlier_sigma * std)
            .collect();
        let (mean_k, std_k, nk) = mean_std(kept.iter().map(|&i| ranges[i]));
        raw.push(RangeCluster {
            points: kept.iter().map(|&i| points[i]).collect(),
            indices: kept,
            mean_range: if nk > 0 { mean_k } else { *center },
            std_range: std_k,
        });
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|a, b| raw[*a].mean_range.total_cmp(&raw[*b].mean_range).then(a.cmp(b)));
    let mut clusters = Vec::with_capacity(k);
    for (new_idx, &old) in order.iter().enumerate() {
        for &i in &raw[old].indices {
            labels[i] = Some(new_idx);
        }
        clusters.push(raw[old].clone());
    }
    let discarded = labels.iter().filter(|l| l.is_none()).count();
    Ok(Clustering { clusters, labels, discarded })
}

/// Centroid and principal-axis box of one fruit cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FruitEstimate {
    pub centroid: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub extent: Vector3<f64>,
    pub point_count: usize,
    pub mean_range: f64,
    /// Set when the cluster has rank below 3; orientation is then identity.
    pub degenerate: bool,
}

impl FruitEstimate {
    pub fn pose(&self) -> Pose {
        Pose::new(self.centroid, self.orientation)
    }

    /// Sphere-center estimate from a surface cluster: the visible cap's centroid
    /// sits about two thirds of a radius in front of the center along the ray.
    pub fn sphere_center(&self) -> Vector3<f64> {
        let r = 0.5 * self.extent.x.max(self.extent.y).max(self.extent.z);
        let n = self.centroid.norm();
        if n < 1e-12 {
            return self.centroid;
        }
        self.centroid + self.centroid * (2.0 * r / (3.0 * n))
    }
}

/// Flips `a` so its first clearly nonzero component among z, x, y is positive.
fn orient_axis(a: Vector3<f64>) -> Vector3<f64> {
    for c in [a.z, a.x, a.y] {
        if c.abs() > 1e-9 {
            return if c < 0.0 { -a } else { a };
        }
    }
    a
}

pub fn estimate_fruit_pose(cluster: &[Vector3<f64>]) -> Result<FruitEstimate, PerceptionError> {
    if cluster.is_empty() {
        return Err(PerceptionError::EmptyInput);
    }
    let n = cluster.len() as f64;
    let centroid = cluster.iter().sum::<Vector3<f64>>() / n;
    let mean_range = cluster.iter().map(|p| p.norm()).sum::<f64>() / n;

    let mut cov = Matrix3::zeros();
    for p in cluster {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let l_max = eig.eigenvalues[idx[0]];
    let l_min = eig.eigenvalues[idx[2]];
    let degenerate = cluster.len() < 4 || l_max <= 1e-18 || l_min <= 1e-9 * l_max;

    let axes = if degenerate {
        [Vector3::x(), Vector3::y(), Vector3::z()]
    } else {
        let a1 = orient_axis(eig.eigenvectors.column(idx[0]).normalize());
        let mut a2 = orient_axis(eig.eigenvectors.column(idx[1]).normalize());
        // re-orthogonalize against numerical drift
        a2 = (a2 - a1 * a1.dot(&a2)).normalize();
        let a3 = a1.cross(&a2);
        [a1, a2, a3]
    };
    let mut extent = Vector3::zeros();
    for (k, a) in axes.iter().enumerate() {
        let (lo, hi) = cluster
            .iter()
            .map(|p| a.dot(p))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
        extent[k] = hi - lo;
    }
    let orientation = if degenerate {
        UnitQuaternion::identity()
    } else {
        quat_from_axes(&axes[0], &axes[1], &axes[2])
    };
    Ok(FruitEstimate {
        centroid,
        orientation,
        extent,
        point_count: cluster.len(),
        mean_range,
        degenerate,
    })
}

/// Full pipeline: align, back-project the union of all masks, cluster with
/// one group per detection and fit each non-empty group.
pub fn perceive(
    depth: &DepthFrame,
    color: &Intrinsics,
    detections: &DetectionSet,
    outlier_sigma: f64,
) -> Result<Vec<FruitEstimate>, PerceptionError> {
    color.validate()?;
    depth.intrinsics.validate()?;
    detections.validate(color)?;
    if detections.count() == 0 {
        return Ok(Vec::new());
    }
    let aligned = align_depth_to_color(depth, color);
    let union = detections.union(color.width, color.height);
    let cloud = backproject_masked_cloud(&aligned, &union, color)?;
    let clustering = range_histogram_cluster(&cloud, detections.count(), outlier_sigma)?;
    clustering
        .clusters
        .iter()
        .filter(|c| !c.points.is_empty())
        .map(|c| estimate_fruit_pose(&c.points))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn small(w: u32, h: u32, f: f64) -> Intrinsics {
        Intrinsics {
            fx: f,
            fy: f,
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            width: w,
            height: h,
            depth_scale: 0.001,
        }
    }

    #[test]
    fn vga_is_valid() {
        Intrinsics::vga().validate().unwrap();
        let mut bad = Intrinsics::vga();
        bad.cx = 640.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_alignment_is_identity() {
        let intr = small(8, 6, 10.0);
        let data: Vec<u16> = (0..48).map(|i| if i % 5 == 0 { 0 } else { 900 + i as u16 }).collect();
        let f = DepthFrame::new(data.clone(), intr, Pose::identity()).unwrap();
        assert_eq!(align_depth_to_color(&f, &intr), data);
    }

    #[test]
    fn baseline_shift_on_plane() {
        // fx * 0.05 / 1.0 = 30 px
        let intr = small(100, 20, 600.0);
        let f = DepthFrame::new(vec![1000; 2000], intr, Pose::from_translation(0.05, 0.0, 0.0)).unwrap();
        let out = align_depth_to_color(&f, &intr);
        for v in 0..20 {
            for u in 0..100 {
                let expected = if u >= 30 { 1000 } else { 0 };
                assert_eq!(out[v * 100 + u], expected, "({u},{v})");
            }
        }
    }

    #[test]
    fn nearer_depth_wins() {
        let intr = small(3, 1, 10.0);
        let mut data = vec![0u16; 3];
        data[0] = 2000;
        data[2] = 1000;
        let f = DepthFrame::new(data, intr, Pose::identity()).unwrap();
        // a tiny focal length squeezes both source pixels onto the center one
        let mut color = intr;
        color.fx = 1e-3;
        assert_eq!(align_depth_to_color(&f, &color), vec![0, 1000, 0]);
    }

    #[test]
    fn principal_point_backprojects_to_axis() {
        let intr = small(5, 5, 100.0);
        let mut depth = vec![0u16; 25];
        depth[12] = 1000;
        let mut m = Mask::empty(5, 5);
        m.set(2, 2, true);
        let pts = backproject_masked_cloud(&depth, &m, &intr).unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0], Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        let none = backproject_masked_cloud(&depth, &Mask::empty(5, 5), &intr).unwrap();
        assert!(none.is_empty());
        assert!(matches!(
            backproject_masked_cloud(&depth, &Mask::empty(4, 5), &intr),
            Err(PerceptionError::ShapeMismatch { .. })
        ));
    }

    fn at_range(r: f64) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, r)
    }

    #[test]
    fn k_one_keeps_everything_without_outliers() {
        let pts: Vec<_> = (0..10).map(|i| at_range(1.0 + 0.001 * i as f64)).collect();
        let c = range_histogram_cluster(&pts, 1, 2.5).unwrap();
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].points.len(), 10);
        assert_eq!(c.discarded, 0);
    }

    #[test]
    fn two_groups_and_far_outlier() {
        let mut pts: Vec<_> = (0..30).map(|i| at_range(0.49 + 0.02 * i as f64 / 29.0)).collect();
        pts.extend((0..20).map(|i| at_range(0.89 + 0.02 * i as f64 / 19.0)));
        let c = range_histogram_cluster(&pts, 2, 2.5).unwrap();
        assert_eq!((c.clusters[0].points.len(), c.clusters[1].points.len()), (30, 20));
        assert!((c.clusters[0].mean_range - 0.50).abs() < 0.005);
        assert!((c.clusters[1].mean_range - 0.90).abs() < 0.005);

        pts.push(at_range(3.0));
        let c = range_histogram_cluster(&pts, 2, 2.5).unwrap();
        assert_eq!(c.labels[50], None);
        assert_eq!(c.discarded, 1);
        assert_eq!((c.clusters[0].points.len(), c.clusters[1].points.len()), (30, 20));
    }

    #[test]
    fn cluster_errors() {
        assert_eq!(range_histogram_cluster(&[], 1, 2.5), Err(PerceptionError::EmptyInput));
        assert_eq!(
            range_histogram_cluster(&[at_range(1.0)], 2, 2.5),
            Err(PerceptionError::KExceedsPoints { k: 2, n: 1 })
        );
        assert_eq!(range_histogram_cluster(&[at_range(1.0)], 0, 2.5), Err(PerceptionError::InvalidK));
    }

    #[test]
    fn identical_ranges_still_return_k_clusters() {
        let pts = vec![at_range(1.0); 5];
        let c = range_histogram_cluster(&pts, 3, 2.5).unwrap();
        assert_eq!(c.clusters.len(), 3);
        let total: usize = c.clusters.iter().map(|c| c.points.len()).sum();
        assert_eq!(total + c.discarded, 5);
    }

    fn box_lattice(dims: [f64; 3], n: usize) -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    let s = |t: usize, d: f64| (t as f64 / n as f64 - 0.5) * d;
                    pts.push(Vector3::new(s(i, dims[0]), s(j, dims[1]), s(k, dims[2])));
                }
            }
        }
        pts
    }

    #[test]
    fn axis_aligned_box_gives_identity() {
        let pts: Vec<_> = box_lattice([0.10, 0.06, 0.04], 6)
            .into_iter()
            .map(|p| p + Vector3::new(0.1, 0.0, 1.0))
            .collect();
        let e = estimate_fruit_pose(&pts).unwrap();
        assert!(!e.degenerate);
        assert!(e.orientation.angle() < 1e-9, "{}", e.orientation.angle());
        assert_relative_eq!(e.extent, Vector3::new(0.10, 0.06, 0.04), epsilon = 1e-9);
        assert_relative_eq!(e.centroid, Vector3::new(0.1, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = Vector3::new(0.1, 0.2, 0.9);
        let e = estimate_fruit_pose(&[p; 7]).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.orientation, UnitQuaternion::identity());
        assert_relative_eq!(e.centroid, p, epsilon = 1e-15);
        assert_eq!(estimate_fruit_pose(&[]), Err(PerceptionError::EmptyInput));
    }

    #[test]
    fn planar_cluster_is_degenerate() {
        let pts: Vec<_> = (0..25).map(|i| Vector3::new((i % 5) as f64 * 0.01, (i / 5) as f64 * 0.01, 1.0)).collect();
        assert!(estimate_fruit_pose(&pts).unwrap().degenerate);
    }

    proptest! {
        #[test]
        fn backproject_round_trips(u in 0u32..640, v in 0u32..480, d in 200u16..5000) {
            let intr = Intrinsics::vga();
            let p = intr.backproject(u as f64, v as f64, d as f64 * intr.depth_scale);
            let (pu, pv) = intr.project(&p).unwrap();
            prop_assert!((pu - u as f64).abs() <= 0.5 && (pv - v as f64).abs() <= 0.5);
            prop_assert_eq!(intr.pixel_of(&p), Some((u, v)));
        }

        #[test]
        fn labels_account_for_every_point(
            rs in prop::collection::vec(0.3f64..3.0, 1..60),
            k in 1usize..5,
        ) {
            prop_assume!(k <= rs.len());
            let pts: Vec<_> = rs.iter().map(|r| at_range(*r)).collect();
            let c = range_histogram_cluster(&pts, k, 2.5).unwrap();
            prop_assert_eq!(c.clusters.len(), k);
            let labeled: usize = c.clusters.iter().map(|c| c.points.len()).sum();
            prop_assert_eq!(labeled + c.discarded, pts.len());
            for w in c.clusters.windows(2) {
                prop_assert!(w[0].mean_range <= w[1].mean_range);
            }
        }

        #[test]
        fn obb_is_right_handed_and_not_larger(
            rpy in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let rot = UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]);
            let pts: Vec<_> = box_lattice([0.09, 0.06, 0.03], 4)
                .into_iter()
                .map(|p| rot * p + Vector3::new(0.0, 0.0, 1.0))
                .collect();
            let e = estimate_fruit_pose(&pts).unwrap();
            let m = e.orientation.to_rotation_matrix();
            prop_assert!((m.matrix().determinant() - 1.0).abs() < 1e-9);
            let aabb = |i: usize| {
                let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[i]), hi.max(p[i])));
                hi - lo
            };
            let aabb_vol = aabb(0) * aabb(1) * aabb(2);
            prop_assert!(e.extent.x * e.extent.y * e.extent.z <= aabb_vol + 1e-9);
            prop_assert!(e.extent.x >= e.extent.y && e.extent.y >= e.extent.z);
        }
    }
}
