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

use base64::Engine;
use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::geometry::point_aabb_distance;
use super::CollisionError;

/// Dense voxel occupancy map. Voxel `(i, j, k)` spans
/// `origin + voxel_size * [i, i+1) x [j, j+1) x [k, k+1)`; storage is
/// row-major with x varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct OccupancyGrid {
    origin: Vector3<f64>,
    voxel_size: f64,
    dims: [usize; 3],
    words: Vec<u64>,
}

impl Default for OccupancyGrid {
    fn default() -> Self {
        Self::empty()
    }
}

impl OccupancyGrid {
    /// Grid with no voxels at all.
    pub fn empty() -> Self {
        Self {
            origin: Vector3::zeros(),
            voxel_size: 1.0,
            dims: [0, 0, 0],
            words: Vec::new(),
        }
    }

    pub fn new(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self, CollisionError> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(CollisionError::InvalidVoxelSize(voxel_size));
        }
        let len = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(CollisionError::GridTooLarge)?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            words: alloc::vec![0; len.div_ceil(64)],
        })
    }

    /// Rebuilds a grid from packed bytes (bit `i` of the grid is bit `i % 8` of byte `i / 8`).
    pub fn from_bytes(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3], bytes: &[u8]) -> Result<Self, CollisionError> {
        let mut g = Self::new(origin, voxel_size, dims)?;
        if bytes.len() != g.len().div_ceil(8) {
            return Err(CollisionError::BitsetLength {
                expected: g.len().div_ceil(8),
                got: bytes.len(),
            });
        }
        for (i, &b) in bytes.iter().enumerate() {
            g.words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let tail = g.len() % 64;
        if tail != 0 {
            if let Some(last) = g.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        Ok(g)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.len().div_ceil(8))
            .map(|i| (self.words[i / 8] >> (8 * (i % 8))) as u8)
            .collect()
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flat(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn get(&self, idx: [usize; 3]) -> bool {
        if idx[0] >= self.dims[0] || idx[1] >= self.dims[1] || idx[2] >= self.dims[2] {
            return false;
        }
        let f = self.flat(idx);
        self.words[f / 64] >> (f % 64) & 1 == 1
    }

    pub fn set(&mut self, idx: [usize; 3], value: bool) {
        let f = self.flat(idx);
        if value {
            self.words[f / 64] |= 1 << (f % 64);
        } else {
            self.words[f / 64] &= !(1 << (f % 64));
        }
    }

    /// Signed voxel coordinates of a point; points on a shared face belong to
    /// the voxel with the larger index.
    pub fn voxel_coords(&self, p: &Vector3<f64>) -> [i64; 3] {
        let mut out = [0i64; 3];
        for i in 0..3 {
            out[i] = ((p[i] - self.origin[i]) / self.voxel_size).floor() as i64;
        }
        out
    }

    pub fn voxel_of(&self, p: &Vector3<f64>) -> Option<[usize; 3]> {
        let c = self.voxel_coords(p);
        let mut out = [0usize; 3];
        for i in 0..3 {
            if c[i] < 0 || c[i] as usize >= self.dims[i] {
                return None;
            }
            out[i] = c[i] as usize;
        }
        Some(out)
    }

    /// Whether the voxel containing `p` is occupied.
    pub fn is_occupied_at(&self, p: &Vector3<f64>) -> bool {
        self.voxel_of(p).is_some_and(|idx| self.get(idx))
    }

    pub fn voxel_bounds(&self, idx: [usize; 3]) -> (Vector3<f64>, Vector3<f64>) {
        let lo = self.origin + Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.voxel_size;
        (lo, lo + Vector3::repeat(self.voxel_size))
    }

    pub fn voxel_center(&self, idx: [usize; 3]) -> Vector3<f64> {
        let (lo, hi) = self.voxel_bounds(idx);
        (lo + hi) * 0.5
    }

    pub fn occupied_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Inclusive index range of voxels overlapping the box `[lo, hi]`, clipped to the grid.
    pub fn index_range(&self, lo: &Vector3<f64>, hi: &Vector3<f64>) -> Option<([usize; 3], [usize; 3])> {
        if self.is_empty() {
            return None;
        }
        let a = self.voxel_coords(lo);
        let b = self.voxel_coords(hi);
        let mut from = [0usize; 3];
        let mut to = [0usize; 3];
        for i in 0..3 {
            let lo_i = a[i].max(0);
            let hi_i = b[i].min(self.dims[i] as i64 - 1);
            if lo_i > hi_i {
                return None;
            }
            from[i] = lo_i as usize;
            to[i] = hi_i as usize;
        }
        Some((from, to))
    }

    pub fn iter_occupied(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, _] = self.dims;
        (0..self.len())
            .filter(move |&f| self.words[f / 64] >> (f % 64) & 1 == 1)
            .map(move |f| [f % nx, (f / nx) % ny, f / (nx * ny)])
    }
}

/// Occupancy grid on the world-aligned lattice of spacing `voxel_size`.
///
/// A voxel is occupied iff some point lies within `inflation` of its box.
pub fn grid_from_points(points: &[Vector3<f64>], voxel_size: f64, inflation: f64) -> Result<OccupancyGrid, CollisionError> {
    if points.is_empty() {
        return Err(CollisionError::EmptyPointSet);
    }
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(CollisionError::InvalidVoxelSize(voxel_size));
    }
    if !(inflation >= 0.0 && inflation.is_finite()) {
        return Err(CollisionError::InvalidInflation(inflation));
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let cell = |v: f64| (v / voxel_size).floor() as i64;
    let mut first = [0i64; 3];
    let mut dims = [0usize; 3];
    for i in 0..3 {
        first[i] = cell(lo[i] - inflation);
        dims[i] = (cell(hi[i] + inflation) - first[i] + 1) as usize;
    }
    let origin = Vector3::new(first[0] as f64, first[1] as f64, first[2] as f64) * voxel_size;
    let mut grid = OccupancyGrid::new(origin, voxel_size, dims)?;
    for p in points {
        let reach = Vector3::repeat(inflation);
        let Some((from, to)) = grid.index_range(&(p - reach), &(p + reach)) else {
            continue;
        };
        for z in from[2]..=to[2] {
            for y in from[1]..=to[1] {
                for x in from[0]..=to[0] {
                    let idx = [x, y, z];
                    if grid.get(idx) {
                        continue;
                    }
                    let (vlo, vhi) = grid.voxel_bounds(idx);
                    if point_aabb_distance(p, &vlo, &vhi) <= inflation {
                        grid.set(idx, true);
                    }
                }
            }
        }
    }
    Ok(grid)
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    origin: [f64; 3],
    voxel_size: f64,
    dims: [usize; 3],
    #[serde(default = "default_encoding")]
    encoding: String,
    bits: String,
}

fn default_encoding() -> String {
    "base64".into()
}

impl TryFrom<GridRepr> for OccupancyGrid {
    type Error = CollisionError;
    fn try_from(r: GridRepr) -> Result<Self, CollisionError> {
        let bytes = match r.encoding.as_str() {
            "base64" => base64::engine::general_purpose::STANDARD
                .decode(r.bits.as_bytes())
                .map_err(|_| CollisionError::BadEncoding)?,
            "hex" => hex::decode(&r.bits).map_err(|_| CollisionError::BadEncoding)?,
            _ => return Err(CollisionError::BadEncoding),
        };
        if r.dims == [0, 0, 0] && bytes.is_empty() {
            return Ok(OccupancyGrid::empty());
        }
        OccupancyGrid::from_bytes(Vector3::from(r.origin), r.voxel_size, r.dims, &bytes)
    }
}

impl From<OccupancyGrid> for GridRepr {
    fn from(g: OccupancyGrid) -> Self {
        GridRepr {
            origin: g.origin.into(),
            voxel_size: g.voxel_size,
            dims: g.dims,
            encoding: default_encoding(),
            bits: base64::engine::general_purpose::STANDARD.encode(g.to_bytes()),
        }
    }
}
