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

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fk_unchecked, ChainSpec};
use crate::collision::{grid_from_points, CollisionError, OccupancyGrid};

/// Tool positions from uniform joint samples plus their voxel summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachableSet {
    pub points: Vec<Vector3<f64>>,
    pub summary: OccupancyGrid,
}

impl ReachableSet {
    /// Voxel membership: a point counts as reachable iff its voxel holds a
    /// sample. Points on a voxel face belong to the voxel with the larger index.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.summary.is_occupied_at(p)
    }
}

pub fn sample_reachable_set(chain: &ChainSpec, n: usize, seed: u64, voxel_size: f64) -> Result<ReachableSet, CollisionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = alloc::vec![0.0; chain.dof()];
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        for (v, j) in q.iter_mut().zip(&chain.joints) {
            *v = rng.random_range(j.limit_lo..=j.limit_hi);
        }
        points.push(fk_unchecked(chain, &q).position);
    }
    let summary = grid_from_points(&points, voxel_size, 0.0)?;
    Ok(ReachableSet { points, summary })
}

#[cfg(test)]
mod tests {
    use super::super::test_chains::planar2;
    use super::*;

    #[test]
    fn annulus_bounds_and_hole() {
        let set = sample_reachable_set(&planar2(), 100_000, 3, 0.02).unwrap();
        for p in &set.points {
            let r = p.norm();
            assert!((0.1 - 1e-12..=0.5 + 1e-12).contains(&r), "{r}");
        }
        assert!(!set.contains(&Vector3::new(0.001, 0.001, 0.0)));
        assert!(!set.contains(&Vector3::new(-0.021, 0.021, 0.0)));
        assert!(set.contains(&Vector3::new(0.3, 0.0, 0.0)));
        assert!(!set.contains(&Vector3::new(2.0, 0.0, 0.0)));
    }

    #[test]
    fn same_seed_same_points() {
        let a = sample_reachable_set(&planar2(), 500, 11, 0.02).unwrap();
        let b = sample_reachable_set(&planar2(), 500, 11, 0.02).unwrap();
        assert_eq!(a, b);
        let c = sample_reachable_set(&planar2(), 500, 12, 0.02).unwrap();
        assert_ne!(a.points, c.points);
    }
}
