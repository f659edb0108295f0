//! Ground-truth height and collision grids from static scene geometry.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::GridSpec;

use super::raycast::{nearest_hit, Polytope};
use super::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthParams {
    pub tau_h: f64,
    /// Samples per cell side; the cell height is the maximum over them.
    pub subsamples: usize,
    pub connectivity: Connectivity,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self {
            tau_h: 0.25,
            subsamples: 4,
            connectivity: Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthGrid {
    pub spec: GridSpec,
    /// Top surface height; `None` where no geometry lies below the cell.
    pub h_max: Vec<Option<f64>>,
    pub collision: Vec<bool>,
}

impl GroundTruthGrid {
    pub fn traversable(&self, index: usize) -> bool {
        !self.collision[index]
    }

    pub fn collision_count(&self) -> usize {
        self.collision.iter().filter(|c| **c).count()
    }

    /// Labels cells whose height differs from some neighbor by more than
    /// `tau_h`.
    pub fn from_heights(spec: GridSpec, h_max: Vec<Option<f64>>, tau_h: f64, connectivity: Connectivity) -> Self {
        let collision = (0..spec.len())
            .map(|i| {
                let Some(h) = h_max[i] else { return false };
                let (x, y) = spec.coords(i);
                connectivity.offsets().iter().any(|(dx, dy)| {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= spec.cols || ny as usize >= spec.rows {
                        return false;
                    }
                    h_max[spec.index(nx as usize, ny as usize)].is_some_and(|n| (n - h).abs() > tau_h)
                })
            })
            .collect();
        Self { spec, h_max, collision }
    }
}

/// Height of the highest static surface below `(x, y)`.
pub fn surface_height(shapes: &[Polytope], top: f64, x: f64, y: f64) -> Option<f64> {
    let origin = Vector3::new(x, y, top);
    nearest_hit(shapes, &origin, &-Vector3::z()).map(|t| top - t)
}

/// Ground truth over `spec` from the static part of `scene`.
pub fn ground_truth(scene: &Scene, spec: &GridSpec, params: &TruthParams) -> GroundTruthGrid {
    let shapes = scene.static_polytopes();
    let top = scene.bounds.max[2] + 1.0;
    let n = params.subsamples.max(1);
    let h_max = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = spec.coords(i);
            let x0 = spec.origin[0] + x as f64 * spec.resolution;
            let y0 = spec.origin[1] + y as f64 * spec.resolution;
            let step = spec.resolution / n as f64;
            let mut best: Option<f64> = None;
            for j in 0..n {
                for k in 0..n {
                    let sx = x0 + (k as f64 + 0.5) * step;
                    let sy = y0 + (j as f64 + 0.5) * step;
                    if let Some(h) = surface_height(&shapes, top, sx, sy) {
                        best = Some(best.map_or(h, |b: f64| b.max(h)));
                    }
                }
            }
            best
        })
        .collect();
    GroundTruthGrid::from_heights(*spec, h_max, params.tau_h, params.connectivity)
}
