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
//! Closest-distance queries between segments, points and boxes.

use nalgebra::Vector3;
#[allow(unused_imports)]
use num_traits::Float;

type V3 = Vector3<f64>;

pub fn point_aabb_distance(p: &V3, lo: &V3, hi: &V3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let d = if p[i] < lo[i] {
            lo[i] - p[i]
        } else if p[i] > hi[i] {
            p[i] - hi[i]
        } else {
            0.0
        };
        s += d * d;
    }
    s.sqrt()
}

pub fn point_segment_distance(p: &V3, a: &V3, b: &V3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 <= 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (p - (a + ab * t)).norm()
}

/// Slab test for a closed segment against a closed box.
pub fn segment_hits_aabb(a: &V3, b: &V3, lo: &V3, hi: &V3) -> bool {
    let d = b - a;
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for i in 0..3 {
        if d[i].abs() < 1e-300 {
            if a[i] < lo[i] || a[i] > hi[i] {
                return false;
            }
        } else {
            let inv = 1.0 / d[i];
            let mut ta = (lo[i] - a[i]) * inv;
            let mut tb = (hi[i] - a[i]) * inv;
            if ta > tb {
                core::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Distance between a segment and a box.
///
/// The distance from a convex set is convex along a line, so a golden-section
/// search over the segment parameter finds the minimum.
pub fn segment_aabb_distance(a: &V3, b: &V3, lo: &V3, hi: &V3) -> f64 {
    if segment_hits_aabb(a, b, lo, hi) {
        return 0.0;
    }
    let d = b - a;
    let f = |t: f64| point_aabb_distance(&(a + d * t), lo, hi);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut x0, mut x1) = (0.0f64, 1.0f64);
    let mut c = x1 - INV_PHI * (x1 - x0);
    let mut e = x0 + INV_PHI * (x1 - x0);
    let mut fc = f(c);
    let mut fe = f(e);
    for _ in 0..64 {
        if fc < fe {
            x1 = e;
            e = c;
            fe = fc;
            c = x1 - INV_PHI * (x1 - x0);
            fc = f(c);
        } else {
            x0 = c;
            c = e;
            fc = fe;
            e = x0 + INV_PHI * (x1 - x0);
            fe = f(e);
        }
    }
    fc.min(fe).min(f(0.0)).min(f(1.0))
}

/// Closest distance between segments `p1-q1` and `p2-q2`.
pub fn segment_segment_distance(p1: &V3, q1: &V3, p2: &V3, q2: &V3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    const EPS: f64 = 1e-18;
    let (s, t);
    if a <= EPS && e <= EPS {
        return r.norm();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}
