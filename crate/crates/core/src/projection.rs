//! Spherical range-image projection and surfel construction.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pca_normal;

/// One range scan in the sensor frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RangeScan {
    pub points: Vec<Vector3<f64>>,
    /// Carried through ingestion; the pipeline does not read it.
    pub intensity: Option<Vec<f32>>,
    pub timestamp: u64,
}

impl RangeScan {
    pub fn new(points: Vec<Vector3<f64>>, timestamp: u64) -> Self {
        Self {
            points,
            intensity: None,
            timestamp,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Raster geometry of the spherical projection. Angles are radians; `fov_up`
/// and `fov_down` are measured from the horizontal plane, `fov_left` and
/// `fov_right` from the sensor x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorIntrinsics {
    pub width: usize,
    pub height: usize,
    pub fov_up: f64,
    pub fov_down: f64,
    pub fov_left: f64,
    pub fov_right: f64,
    pub full_azimuth: bool,
}

impl SensorIntrinsics {
    pub fn new(
        width: usize,
        height: usize,
        fov_up: f64,
        fov_down: f64,
        fov_left: f64,
        fov_right: f64,
        full_azimuth: bool,
    ) -> Result<Self> {
        let intr = Self {
            width,
            height,
            fov_up,
            fov_down,
            fov_left,
            fov_right,
            full_azimuth,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// 360° sensor; the horizontal field of view is exactly `2π`.
    pub fn full_circle(width: usize, height: usize, fov_up: f64, fov_down: f64) -> Result<Self> {
        Self::new(width, height, fov_up, fov_down, PI, PI, true)
    }

    /// 360 × 64 raster with ±45° vertical field of view (OS0-like).
    pub fn default_360x64() -> Self {
        Self::full_circle(360, 64, PI / 4.0, PI / 4.0).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Intrinsics(format!(
                "raster must be at least 2×2, got {}×{}",
                self.width, self.height
            )));
        }
        let all = [self.fov_up, self.fov_down, self.fov_left, self.fov_right];
        if !all.iter().all(|a| a.is_finite()) {
            return Err(Error::Intrinsics("non-finite field of view".into()));
        }
        if !(self.vertical_fov() > 0.0) || !(self.horizontal_fov() > 0.0) {
            return Err(Error::Intrinsics("fields of view must be positive".into()));
        }
        if self.fov_up > PI / 2.0 || self.fov_down > PI / 2.0 {
            return Err(Error::Intrinsics("vertical limits must be within ±90°".into()));
        }
        if self.full_azimuth && (self.horizontal_fov() - 2.0 * PI).abs() > 1e-12 {
            return Err(Error::Intrinsics(
                "full-azimuth sensors need fov_left + fov_right = 2π".into(),
            ));
        }
        if !self.full_azimuth && self.horizontal_fov() >= PI {
            return Err(Error::Intrinsics(
                "single-argument azimuth needs a horizontal field of view below π".into(),
            ));
        }
        Ok(())
    }

    pub fn vertical_fov(&self) -> f64 {
        self.fov_up + self.fov_down
    }

    pub fn horizontal_fov(&self) -> f64 {
        self.fov_left + self.fov_right
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn pixel_index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Continuous image coordinates of `q` before flooring and bounds checks.
    fn image_coords(&self, q: &Vector3<f64>) -> Option<(f64, f64)> {
        let horizontal = q.x.hypot(q.y);
        let azimuth = if self.full_azimuth {
            q.y.atan2(q.x)
        } else {
            if q.x <= 0.0 {
                // behind a forward-facing sensor; y/x would alias to the front
                return None;
            }
            (q.y / q.x).atan()
        };
        let elevation = q.z.atan2(horizontal);
        let u = self.width as f64 * (1.0 - (azimuth + self.fov_right) / self.horizontal_fov());
        let v = self.height as f64 * (1.0 - (elevation + self.fov_down) / self.vertical_fov());
        Some((u, v))
    }

    /// Unit ray direction through the center of pixel `(u, v)`; the inverse
    /// of [`project_point`] on pixel centers.
    pub fn ray_direction(&self, u: usize, v: usize) -> Vector3<f64> {
        let azimuth = (1.0 - (u as f64 + 0.5) / self.width as f64) * self.horizontal_fov() - self.fov_right;
        let elevation = (1.0 - (v as f64 + 0.5) / self.height as f64) * self.vertical_fov() - self.fov_down;
        let (se, ce) = elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }

    /// Pixels of the `(2k+1)×(2k+1)` window around `(u, v)`. Rows are
    /// clipped at the image border; columns wrap around for full-azimuth
    /// sensors. Iteration order is row-major and fixed.
    pub fn window(&self, u: usize, v: usize, k: usize) -> Window {
        let k = k as isize;
        let wrap = self.full_azimuth && (2 * k + 1) as usize <= self.width;
        Window {
            width: self.width as isize,
            height: self.height as isize,
            cu: u as isize,
            cv: v as isize,
            k,
            du: -k,
            dv: -k,
            wrap,
        }
    }
}

/// Iterator returned by [`SensorIntrinsics::window`].
pub struct Window {
    width: isize,
    height: isize,
    cu: isize,
    cv: isize,
    k: isize,
    du: isize,
    dv: isize,
    wrap: bool,
}

impl Iterator for Window {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        while self.dv <= self.k {
            let v = self.cv + self.dv;
            let raw_u = self.cu + self.du;
            self.du += 1;
            if self.du > self.k {
                self.du = -self.k;
                self.dv += 1;
            }
            if v < 0 || v >= self.height {
                continue;
            }
            let u = if self.wrap {
                raw_u.rem_euclid(self.width)
            } else if raw_u < 0 || raw_u >= self.width {
                continue;
            } else {
                raw_u
            };
            return Some((v * self.width + u) as usize);
        }
        None
    }
}

/// Maps a sensor-frame point onto its `(u, v)` pixel, or `None` when it falls
/// outside the raster. Coordinates within half a pixel beyond the border are
/// clamped onto the edge row or column.
pub fn project_point(q: &Vector3<f64>, intr: &SensorIntrinsics) -> Option<(usize, usize)> {
    if !(q.norm() > 0.0) {
        return None;
    }
    let (u, v) = intr.image_coords(q)?;
    Some((clamp_axis(u, intr.width)?, clamp_axis(v, intr.height)?))
}

fn clamp_axis(x: f64, n: usize) -> Option<usize> {
    let n_f = n as f64;
    if !(x >= -0.5 && x < n_f + 0.5) {
        return None;
    }
    Some((x.floor().max(0.0) as usize).min(n - 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surfel {
    pub p: Vector3<f64>,
    pub n: Vector3<f64>,
    pub valid: bool,
}

impl Surfel {
    pub const EMPTY: Surfel = Surfel {
        p: Vector3::new(0.0, 0.0, 0.0),
        n: Vector3::new(0.0, 0.0, 0.0),
        valid: false,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfelMap {
    pub intrinsics: SensorIntrinsics,
    /// Row-major `width × height` raster.
    pub cells: Vec<Surfel>,
    /// Largest `‖p‖` among valid surfels of each column, 0 for empty columns.
    pub max_range_per_column: Vec<f64>,
}

impl SurfelMap {
    pub fn get(&self, u: usize, v: usize) -> &Surfel {
        &self.cells[self.intrinsics.pixel_index(u, v)]
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|s| s.valid).count()
    }
}

/// Knobs of [`build_surfel_map`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfelParams {
    /// Half-width `k` of the PCA window (`2k+1` pixels square).
    pub normal_kernel: usize,
    /// Minimum number of points in the window for a valid normal.
    pub min_support: usize,
    /// Returns closer than this are dropped before projection, in meters.
    pub min_range: f64,
}

impl Default for SurfelParams {
    fn default() -> Self {
        Self {
            normal_kernel: 1,
            min_support: 3,
            min_range: 0.3,
        }
    }
}

/// Projects `scan` into a surfel map. Each pixel keeps its nearest return
/// (ties go to the earlier point); normals come from PCA over the points in
/// the pixel window.
pub fn build_surfel_map(scan: &RangeScan, intr: &SensorIntrinsics, params: &SurfelParams) -> SurfelMap {
    let n_pix = intr.len();
    let mut nearest: Vec<Option<(f64, Vector3<f64>)>> = vec![None; n_pix];
    for q in &scan.points {
        if !q.iter().all(|c| c.is_finite()) {
            continue;
        }
        let range = q.norm();
        if range < params.min_range {
            continue;
        }
        let Some((u, v)) = project_point(q, intr) else {
            continue;
        };
        let slot = &mut nearest[intr.pixel_index(u, v)];
        match slot {
            Some((r, _)) if *r <= range => {}
            _ => *slot = Some((range, *q)),
        }
    }

    let cells: Vec<Surfel> = (0..n_pix)
        .into_par_iter()
        .map_init(Vec::new, |support, idx| {
            let Some((_, p)) = nearest[idx] else {
                return Surfel::EMPTY;
            };
            let (u, v) = (idx % intr.width, idx / intr.width);
            support.clear();
            support.extend(
                intr.window(u, v, params.normal_kernel)
                    .filter_map(|j| nearest[j].map(|(_, q)| q)),
            );
            match (support.len() >= params.min_support.max(3))
                .then(|| pca_normal(support))
                .flatten()
            {
                Some(n) => Surfel { p, n, valid: true },
                None => Surfel {
                    p,
                    n: Vector3::zeros(),
                    valid: false,
                },
            }
        })
        .collect();

    let mut max_range_per_column = vec![0.0f64; intr.width];
    for (idx, s) in cells.iter().enumerate() {
        if s.valid {
            let col = &mut max_range_per_column[idx % intr.width];
            *col = col.max(s.p.norm());
        }
    }

    SurfelMap {
        intrinsics: *intr,
        cells,
        max_range_per_column,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr() -> SensorIntrinsics {
        SensorIntrinsics::full_circle(360, 64, PI / 4.0, PI / 4.0).unwrap()
    }

    /// Straight evaluation of the projection formula, kept apart from the
    /// production path.
    fn brute_uv(q: [f64; 3], w: f64, h: f64, ft: f64, fb: f64, fl: f64, fr: f64) -> (f64, f64) {
        let az = q[1].atan2(q[0]);
        let el = (q[2] / (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt()).asin();
        (w * (1.0 - (az + fr) / (fl + fr)), h * (1.0 - (el + fb) / (ft + fb)))
    }

    #[test]
    fn forward_axis_maps_to_image_center() {
        assert_eq!(project_point(&Vector3::new(1.0, 0.0, 0.0), &intr()), Some((180, 32)));
    }

    #[test]
    fn left_axis_maps_to_quarter_column() {
        let (u, _) = brute_uv([0.0, 1.0, 0.0], 360.0, 64.0, PI / 4.0, PI / 4.0, PI, PI);
        assert!((u - 90.0).abs() < 1e-9);
        assert_eq!(project_point(&Vector3::new(0.0, 1.0, 0.0), &intr()), Some((90, 32)));
    }

    #[test]
    fn upper_fov_edge_maps_to_top_row() {
        let (_, v) = brute_uv([1.0, 0.0, 1.0], 360.0, 64.0, PI / 4.0, PI / 4.0, PI, PI);
        assert!(v.abs() < 1e-9);
        assert_eq!(project_point(&Vector3::new(1.0, 0.0, 1.0), &intr()), Some((180, 0)));
    }

    #[test]
    fn outside_vertical_fov_is_rejected() {
        assert_eq!(project_point(&Vector3::new(1.0, 0.0, 2.0), &intr()), None);
        assert_eq!(project_point(&Vector3::new(1.0, 0.0, -2.0), &intr()), None);
        assert_eq!(project_point(&Vector3::zeros(), &intr()), None);
    }

    #[test]
    fn half_pixel_beyond_edge_is_clamped() {
        let i = intr();
        // elevation just above fov_up by a third of a pixel
        let pix = i.vertical_fov() / i.height as f64;
        let el = PI / 4.0 + pix / 3.0;
        let q = Vector3::new(el.cos(), 0.0, el.sin());
        assert_eq!(project_point(&q, &i).map(|p| p.1), Some(0));
        let el = PI / 4.0 + pix;
        let q = Vector3::new(el.cos(), 0.0, el.sin());
        assert_eq!(project_point(&q, &i), None);
    }

    #[test]
    fn rear_azimuth_lands_on_adjacent_border_columns() {
        let i = intr();
        let a = project_point(&Vector3::new(-1.0, 1e-9, 0.0), &i).unwrap();
        let b = project_point(&Vector3::new(-1.0, -1e-9, 0.0), &i).unwrap();
        assert_eq!(a.0, 0);
        assert_eq!(b.0, 359);
    }

    #[test]
    fn forward_sensor_rejects_points_behind() {
        let i = SensorIntrinsics::new(64, 32, 0.3, 0.3, 0.6, 0.6, false).unwrap();
        assert!(project_point(&Vector3::new(1.0, 0.1, 0.0), &i).is_some());
        assert_eq!(project_point(&Vector3::new(-1.0, 0.1, 0.0), &i), None);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(SensorIntrinsics::new(1, 64, 0.5, 0.5, PI, PI, true).is_err());
        assert!(SensorIntrinsics::new(360, 64, 0.5, 0.5, 1.0, 1.0, true).is_err());
        assert!(SensorIntrinsics::new(360, 64, -0.5, 0.5, PI, PI, true).is_err());
    }

    #[test]
    fn ray_direction_round_trips_through_projection() {
        let i = intr();
        for v in 0..i.height {
            for u in (0..i.width).step_by(7) {
                let d = i.ray_direction(u, v);
                assert_eq!(project_point(&(d * 3.0), &i), Some((u, v)));
            }
        }
    }

    #[test]
    fn window_wraps_columns_and_clips_rows() {
        let i = intr();
        let w: Vec<_> = i.window(0, 0, 1).collect();
        assert_eq!(w, vec![359, 0, 1, 360 + 359, 360, 361]);
    }

    fn synthetic(points: impl Iterator<Item = Vector3<f64>>) -> RangeScan {
        RangeScan::new(points.collect(), 0)
    }

    /// Rays of the default raster intersected with z = -0.5.
    fn floor_scan(i: &SensorIntrinsics) -> RangeScan {
        synthetic(
            (0..i.height)
                .flat_map(|v| (0..i.width).map(move |u| (u, v)))
                .filter_map(|(u, v)| {
                    let d = i.ray_direction(u, v);
                    (d.z < -1e-3).then(|| d * (-0.5 / d.z)).filter(|p| p.norm() < 20.0)
                }),
        )
    }

    #[test]
    fn planar_scan_has_vertical_normals() {
        let i = intr();
        let map = build_surfel_map(&floor_scan(&i), &i, &SurfelParams::default());
        assert!(map.valid_count() > 1000);
        for s in map.cells.iter().filter(|s| s.valid) {
            assert!((s.n - Vector3::z()).norm() < 1e-6, "normal {:?}", s.n);
        }
    }

    #[test]
    fn wall_scan_has_horizontal_normals() {
        let i = intr();
        let scan = synthetic(
            (0..i.height)
                .flat_map(|v| (0..i.width).map(move |u| (u, v)))
                .filter_map(|(u, v)| {
                    let d = i.ray_direction(u, v);
                    (d.x > 0.2).then(|| d * (2.0 / d.x)).filter(|p| p.y.abs() < 3.0)
                }),
        );
        let map = build_surfel_map(&scan, &i, &SurfelParams::default());
        assert!(map.valid_count() > 100);
        for s in map.cells.iter().filter(|s| s.valid) {
            assert!(s.n.z.abs() <= 0.05);
            assert!((s.n.x.abs() - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn isolated_point_is_invalid() {
        let i = intr();
        let map = build_surfel_map(
            &synthetic([Vector3::new(2.0, 0.0, 0.0)].into_iter()),
            &i,
            &SurfelParams::default(),
        );
        assert_eq!(map.valid_count(), 0);
        assert!(map.get(180, 32).p.x == 2.0);
        assert!(map.max_range_per_column.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn nearest_return_wins_and_ties_keep_first() {
        let i = intr();
        let near = Vector3::new(1.0, 0.0, 0.0);
        let far = Vector3::new(2.0, 0.0, 0.0);
        let map = build_surfel_map(&synthetic([far, near].into_iter()), &i, &SurfelParams::default());
        assert_eq!(map.get(180, 32).p, near);
        // equal ranges, same pixel
        let a = Vector3::new(1.0, -0.008, -0.0125);
        let b = Vector3::new(1.0, -0.0125, -0.008);
        assert_eq!(project_point(&a, &i), project_point(&b, &i));
        let map = build_surfel_map(&synthetic([a, b].into_iter()), &i, &SurfelParams::default());
        let (u, v) = project_point(&a, &i).unwrap();
        assert_eq!(map.get(u, v).p, a);
    }

    #[test]
    fn min_range_drops_self_hits() {
        let i = intr();
        let map = build_surfel_map(
            &synthetic([Vector3::new(0.2, 0.0, 0.0)].into_iter()),
            &i,
            &SurfelParams::default(),
        );
        assert_eq!(map.get(180, 32).p, Vector3::zeros());
    }

    #[test]
    fn column_ranges_match_valid_surfels() {
        let i = intr();
        let map = build_surfel_map(&floor_scan(&i), &i, &SurfelParams::default());
        for u in 0..i.width {
            let expect = (0..i.height)
                .map(|v| map.get(u, v))
                .filter(|s| s.valid)
                .map(|s| s.p.norm())
                .fold(0.0, f64::max);
            assert_eq!(map.max_range_per_column[u], expect);
        }
    }

    #[test]
    fn construction_is_deterministic_across_pools() {
        let i = intr();
        let scan = floor_scan(&i);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| build_surfel_map(&scan, &i, &SurfelParams::default()));
        let b = many.install(|| build_surfel_map(&scan, &i, &SurfelParams::default()));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn projection_is_total_and_in_bounds(x in -50.0f64..50.0, y in -50.0f64..50.0, z in -50.0f64..50.0) {
            let i = intr();
            if let Some((u, v)) = project_point(&Vector3::new(x, y, z), &i) {
                prop_assert!(u < i.width && v < i.height);
            }
        }

        #[test]
        fn projection_matches_formula(x in -20.0f64..20.0, y in -20.0f64..20.0, z in -5.0f64..5.0) {
            let i = intr();
            prop_assume!(x.hypot(y) > 1e-3);
            let (uf, vf) = brute_uv([x, y, z], 360.0, 64.0, PI / 4.0, PI / 4.0, PI, PI);
            match project_point(&Vector3::new(x, y, z), &i) {
                Some((u, v)) => {
                    prop_assert!((uf.floor().clamp(0.0, 359.0) - u as f64).abs() < 1.0 + 1e-9);
                    prop_assert!((vf.floor().clamp(0.0, 63.0) - v as f64).abs() < 1.0 + 1e-9);
                }
                None => prop_assert!(!(-0.5..64.5).contains(&vf)),
            }
        }

        #[test]
        fn valid_normals_are_unit_and_upward(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let i = SensorIntrinsics::full_circle(90, 16, PI / 4.0, PI / 4.0).unwrap();
            let pts: Vec<_> = (0..600)
                .map(|_| Vector3::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-1.0..1.0)))
                .collect();
            let map = build_surfel_map(&RangeScan::new(pts, 0), &i, &SurfelParams::default());
            for s in map.cells.iter().filter(|s| s.valid) {
                prop_assert!((s.n.norm() - 1.0).abs() <= 1e-6);
                prop_assert!(s.n.z >= 0.0);
            }
        }
    }
}
