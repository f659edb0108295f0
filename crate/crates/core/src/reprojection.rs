//! Re-projection of surfels and pooled risk into a world-frame 2.5D grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Pose};
use crate::projection::SurfelMap;
use crate::steppability::RiskImage;

/// Number of world-azimuth bins used for the observability bound (1° each).
pub const AZIMUTH_BINS: usize = 360;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedCell {
    pub o: [f64; 2],
    pub h_max: f64,
    pub h_min: f64,
    /// Mean world-frame verticality of the accepted surfels.
    pub n_z: f64,
    /// Largest pooled risk among the accepted surfels.
    pub r_step: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseElevationGrid {
    pub spec: GridSpec,
    pub cells: Vec<Option<ObservedCell>>,
    /// Farthest horizontal range of an accepted surfel per world-azimuth bin,
    /// measured from `sensor_xy`.
    pub column_bound: Vec<f64>,
    pub sensor_xy: [f64; 2],
    /// Surfels that landed outside the grid.
    pub dropped: usize,
    /// Surfels rejected as overhangs.
    pub overhangs: usize,
}

impl SparseElevationGrid {
    pub fn empty(spec: GridSpec, sensor_xy: [f64; 2]) -> Self {
        Self {
            spec,
            cells: vec![None; spec.len()],
            column_bound: vec![0.0; AZIMUTH_BINS],
            sensor_xy,
            dropped: 0,
            overhangs: 0,
        }
    }

    pub fn get(&self, ix: usize, iy: usize) -> Option<&ObservedCell> {
        self.cells[self.spec.index(ix, iy)].as_ref()
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Horizontal range and azimuth bin of world `(x, y)` as seen from the
    /// sensor.
    pub fn polar(&self, x: f64, y: f64) -> (f64, usize) {
        let dx = x - self.sensor_xy[0];
        let dy = y - self.sensor_xy[1];
        (dx.hypot(dy), azimuth_bin(dy.atan2(dx)))
    }

    /// True when the cell center lies no farther than the farthest
    /// observation in its azimuth bin.
    pub fn within_observation(&self, ix: usize, iy: usize) -> bool {
        let c = self.spec.center(ix, iy);
        let (range, bin) = self.polar(c[0], c[1]);
        range <= self.column_bound[bin]
    }
}

fn azimuth_bin(azimuth: f64) -> usize {
    let t = (azimuth + PI) / (2.0 * PI);
    ((t * AZIMUTH_BINS as f64).floor() as isize).rem_euclid(AZIMUTH_BINS as isize) as usize
}

/// Bins valid surfels into `spec`, walking each cell bottom-up: an element is
/// kept while its height stays within `h_p` of the running cell maximum, so
/// overhanging structure above the platform clearance is discarded.
pub fn reproject(
    surfels: &SurfelMap,
    risk: &RiskImage,
    pose: &Pose,
    spec: &GridSpec,
    h_p: f64,
) -> Result<SparseElevationGrid> {
    if surfels.intrinsics != risk.intrinsics {
        return Err(Error::Intrinsics(
            "surfel map and risk image have different intrinsics".into(),
        ));
    }
    if !(h_p > 0.0) {
        return Err(Error::Config(format!("platform height must be positive, got {h_p}")));
    }
    let sensor_xy = [pose.translation.x, pose.translation.y];
    let mut grid = SparseElevationGrid::empty(*spec, sensor_xy);

    struct Element {
        cell: usize,
        z: f64,
        pixel: usize,
        n_z: f64,
        risk: f64,
        xy: [f64; 2],
    }

    let mut elements = Vec::with_capacity(surfels.cells.len());
    for (pixel, s) in surfels.cells.iter().enumerate() {
        if !s.valid {
            continue;
        }
        let Some(risk) = risk.values[pixel] else {
            continue;
        };
        let pw = pose.transform_point(&s.p);
        let Some((ix, iy)) = spec.locate(pw.x, pw.y) else {
            grid.dropped += 1;
            continue;
        };
        elements.push(Element {
            cell: spec.index(ix, iy),
            z: pw.z,
            pixel,
            n_z: pose.rotate(&s.n).z.abs().min(1.0),
            risk,
            xy: [pw.x, pw.y],
        });
    }
    elements.sort_by(|a, b| {
        a.cell
            .cmp(&b.cell)
            .then(a.z.total_cmp(&b.z))
            .then(a.pixel.cmp(&b.pixel))
    });

    let mut start = 0;
    while start < elements.len() {
        let cell = elements[start].cell;
        let mut end = start;
        let mut acc: Option<ObservedCell> = None;
        let mut n_z_sum = 0.0;
        while end < elements.len() && elements[end].cell == cell {
            let e = &elements[end];
            end += 1;
            match acc.as_mut() {
                None => {
                    let (ix, iy) = spec.coords(cell);
                    n_z_sum = e.n_z;
                    acc = Some(ObservedCell {
                        o: spec.center(ix, iy),
                        h_max: e.z,
                        h_min: e.z,
                        n_z: e.n_z,
                        r_step: e.risk,
                        count: 1,
                    });
                }
                Some(c) if e.z <= c.h_max + h_p => {
                    c.h_max = c.h_max.max(e.z);
                    c.h_min = c.h_min.min(e.z);
                    c.r_step = c.r_step.max(e.risk);
                    c.count += 1;
                    n_z_sum += e.n_z;
                    c.n_z = n_z_sum / c.count as f64;
                }
                Some(_) => {
                    grid.overhangs += 1;
                    continue;
                }
            }
            let (range, bin) = grid.polar(e.xy[0], e.xy[1]);
            grid.column_bound[bin] = grid.column_bound[bin].max(range);
        }
        grid.cells[cell] = acc;
        start = end;
    }
    Ok(grid)
}
