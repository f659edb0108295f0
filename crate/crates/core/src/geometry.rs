//! Poses, grid lattices and the small amount of linear algebra shared by the
//! pipeline stages.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensor-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Orthonormality tolerance checked by [`Pose::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let dev = orthonormality_error(&rotation);
        if !(dev <= ROTATION_TOLERANCE) {
            return Err(Error::Pose(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {dev:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::Pose(format!("rotation determinant {det} ≠ 1")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Pose("non-finite translation".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// Level pose at `(x, y, z)` rotated by `yaw` about the world z axis.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Heading of the sensor x axis projected onto the world xy plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Closest rotation in the Frobenius sense (polar factor), with the sign of
/// the smallest singular direction flipped if needed to keep `det = +1`.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // singular values are sorted descending; flip the last column of U
        let mut u = u;
        let last = u.column(2).into_owned();
        u.set_column(2, &(-last));
        r = u * v_t;
    }
    r
}

/// Regular 2D lattice of square cells.
///
/// `origin` is the world `(x, y)` of the lower-left corner of cell `(0, 0)`;
/// cell `(ix, iy)` has its center at `origin + (ix + ½, iy + ½) · resolution`
/// and cells are stored row-major (`iy * cols + ix`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: f64,
    pub cols: usize,
    pub rows: usize,
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(resolution: f64, cols: usize, rows: usize, origin: [f64; 2]) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Grid(format!("resolution must be positive, got {resolution}")));
        }
        if cols == 0 || rows == 0 {
            return Err(Error::Grid("grid must have at least one cell".into()));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::Grid("non-finite origin".into()));
        }
        Ok(Self {
            resolution,
            cols,
            rows,
            origin,
        })
    }

    /// Grid from metric extents, which must be positive multiples of the
    /// resolution.
    pub fn from_extent(resolution: f64, width_m: f64, height_m: f64, origin: [f64; 2]) -> Result<Self> {
        let cols = cells_for_extent(width_m, resolution)?;
        let rows = cells_for_extent(height_m, resolution)?;
        Self::new(resolution, cols, rows, origin)
    }

    /// Square window of `extent_m` centered on `center`, with the origin
    /// snapped onto the global lattice (multiples of `resolution`).
    pub fn centered(center: [f64; 2], extent_m: f64, resolution: f64) -> Result<Self> {
        let n = cells_for_extent(extent_m, resolution)?;
        let half = (n / 2) as f64;
        let ox = ((center[0] / resolution).round() - half) * resolution;
        let oy = ((center[1] / resolution).round() - half) * resolution;
        Self::new(resolution, n, n, [ox, oy])
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width_m(&self) -> f64 {
        self.cols as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.rows as f64 * self.resolution
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.cols + ix
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.cols, index / self.cols)
    }

    #[inline]
    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.resolution,
            self.origin[1] + (iy as f64 + 0.5) * self.resolution,
        ]
    }

    /// Cell containing world `(x, y)`, if inside the grid.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.resolution).floor();
        let fy = ((y - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.cols && iy < self.rows).then_some((ix, iy))
    }

    /// Global lattice offset of cell `(0, 0)`, or an error if the origin is
    /// not a multiple of the resolution.
    pub fn lattice_offset(&self) -> Result<(i64, i64)> {
        let fx = self.origin[0] / self.resolution;
        let fy = self.origin[1] / self.resolution;
        let (rx, ry) = (fx.round(), fy.round());
        if (fx - rx).abs() > 1e-6 || (fy - ry).abs() > 1e-6 {
            return Err(Error::Lattice(format!(
                "grid origin ({}, {}) is not aligned to resolution {}",
                self.origin[0], self.origin[1], self.resolution
            )));
        }
        Ok((rx as i64, ry as i64))
    }
}

fn cells_for_extent(extent: f64, resolution: f64) -> Result<usize> {
    if !(extent > 0.0) || !(resolution > 0.0) {
        return Err(Error::Grid(format!(
            "extent {extent} and resolution {resolution} must be positive"
        )));
    }
    let n = extent / resolution;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-6 * r.max(1.0) {
        return Err(Error::Grid(format!(
            "extent {extent} m is not a positive multiple of resolution {resolution} m"
        )));
    }
    Ok(r as usize)
}

/// Unit normal of the best-fit plane through `points` (smallest principal
/// axis), oriented so that `n_z ≥ 0`. `None` when fewer than three points or
/// when the points are (numerically) collinear.
pub fn pca_normal(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    let lmax = eig.eigenvalues[largest];
    if !(lmax > 1e-18) || eig.eigenvalues[middle] <= 1e-9 * lmax {
        return None;
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(smallest).into_owned();
    let norm = normal.norm();
    if !(norm > 0.0) {
        return None;
    }
    normal /= norm;
    if normal.z < 0.0 {
        normal = -normal;
    }
    Some(normal)
}
