//! Ray casting against convex polytopes.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::geometry::Pose;
use crate::projection::{RangeScan, SensorIntrinsics};

use super::scene::Scene;

/// Intersection of half-spaces `n · p ≤ d`, with an axis-aligned bounding
/// box used to skip misses early.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    planes: Vec<(Vector3<f64>, f64)>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl Polytope {
    fn from_local(planes: &[(Vector3<f64>, f64)], corners: &[Vector3<f64>], origin: Vector3<f64>, yaw: f64) -> Self {
        let rot = Pose::from_xyz_yaw(0.0, 0.0, 0.0, yaw).rotation;
        let planes = planes
            .iter()
            .map(|(n, d)| {
                let n = rot * n;
                (n, d + n.dot(&origin))
            })
            .collect();
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for c in corners {
            let w = rot * c + origin;
            lo = lo.inf(&w);
            hi = hi.sup(&w);
        }
        Self { planes, lo, hi }
    }

    /// Box with the given center and full side lengths, yawed about z.
    pub fn cuboid(center: Vector3<f64>, size: Vector3<f64>, yaw: f64) -> Self {
        let h = size / 2.0;
        let planes = [
            (Vector3::x(), h.x),
            (-Vector3::x(), h.x),
            (Vector3::y(), h.y),
            (-Vector3::y(), h.y),
            (Vector3::z(), h.z),
            (-Vector3::z(), h.z),
        ];
        let corners: Vec<_> = (0..8)
            .map(|i| {
                Vector3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
            })
            .collect();
        Self::from_local(&planes, &corners, center, yaw)
    }

    /// Wedge rising along its local x axis from the middle of its low edge
    /// at `origin`, ending in a vertical face.
    pub fn wedge(origin: Vector3<f64>, length: f64, width: f64, slope: f64, yaw: f64) -> Self {
        let t = slope.tan();
        let hw = width / 2.0;
        let top = Vector3::new(-t, 0.0, 1.0);
        let planes = [
            (-Vector3::z(), 0.0),
            (top.normalize(), 0.0),
            (Vector3::x(), length),
            (Vector3::y(), hw),
            (-Vector3::y(), hw),
        ];
        let z = length * t;
        let corners = [
            Vector3::new(0.0, -hw, 0.0),
            Vector3::new(0.0, hw, 0.0),
            Vector3::new(length, -hw, 0.0),
            Vector3::new(length, hw, 0.0),
            Vector3::new(length, -hw, z),
            Vector3::new(length, hw, z),
        ];
        Self::from_local(&planes, &corners, origin, yaw)
    }

    /// Distance along unit `dir` from `origin` to the entry point, if the
    /// ray enters the polytope at a distance greater than `t_min`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<f64> {
        if !self.hits_aabb(origin, dir) {
            return None;
        }
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for (n, d) in &self.planes {
            let denom = n.dot(dir);
            let dist = d - n.dot(origin);
            if denom.abs() < 1e-15 {
                if dist < 0.0 {
                    return None;
                }
                continue;
            }
            let t = dist / denom;
            if denom < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return None;
            }
        }
        (t0 > t_min && t0 <= t1).then_some(t0)
    }

    fn hits_aabb(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> bool {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..3 {
            if dir[i].abs() < 1e-15 {
                if origin[i] < self.lo[i] || origin[i] > self.hi[i] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / dir[i];
            let (a, b) = ((self.lo[i] - origin[i]) * inv, (self.hi[i] - origin[i]) * inv);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        t1 >= t0.max(0.0) - 1e-9
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            planes: self.planes.iter().map(|(n, d)| (*n, d + n.dot(offset))).collect(),
            lo: self.lo + offset,
            hi: self.hi + offset,
        }
    }
}

/// Nearest entry distance over `shapes`.
pub fn nearest_hit(shapes: &[Polytope], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    shapes
        .iter()
        .filter_map(|s| s.intersect(origin, dir, 1e-9))
        .min_by(f64::total_cmp)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one pixel of one scan, independent of evaluation order.
pub fn pixel_rng(seed: u64, scan: u64, pixel: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ scan) ^ pixel))
}

/// Sensor pose, raster and noise settings of one simulated scan.
pub struct ScanRequest<'a> {
    pub pose: &'a Pose,
    pub intrinsics: &'a SensorIntrinsics,
    pub time: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub scan_index: u64,
    pub max_range: f64,
}

/// Simulated range scan in the sensor frame; rays that miss are omitted.
pub fn raycast_scan(scene: &Scene, req: &ScanRequest<'_>) -> RangeScan {
    let mut shapes = scene.static_polytopes();
    shapes.extend(scene.actor_polytopes(req.time));
    raycast_shapes(&shapes, req)
}

/// [`raycast_scan`] with precomputed geometry.
pub fn raycast_shapes(shapes: &[Polytope], req: &ScanRequest<'_>) -> RangeScan {
    let intr = req.intrinsics;
    let origin = req.pose.translation;
    let noise = (req.noise_sigma > 0.0).then(|| Normal::new(0.0, req.noise_sigma).expect("finite sigma"));
    let points: Vec<Vector3<f64>> = (0..intr.len())
        .into_par_iter()
        .filter_map(|pixel| {
            let (u, v) = (pixel % intr.width, pixel / intr.width);
            let d = intr.ray_direction(u, v);
            let dir = req.pose.rotate(&d);
            let range = nearest_hit(shapes, &origin, &dir)?;
            if range > req.max_range {
                return None;
            }
            let range = match &noise {
                Some(n) => range + n.sample(&mut pixel_rng(req.seed, req.scan_index, pixel as u64)),
                None => range,
            };
            (range > 0.0).then(|| d * range)
        })
        .collect();
    RangeScan::new(points, (req.time * 1e6).round() as u64)
}
