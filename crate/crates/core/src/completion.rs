//! Local terrain completion.
//!
//! Unobserved cells are filled by compact-support kernel regression over the
//! observed cells within radius `l`. Heights use the traversability-aware
//! kernel, where each neighbor's weight is scaled by `1 − r_step`, so walls
//! and edges do not bleed into the terrain estimate. Steppability itself is
//! regressed with the plain kernel. Inference is limited to cells no farther
//! than the farthest observation in their azimuth bin.
//!
//! Every non-empty cell then receives inferred verticality (PCA over the
//! completed heights), inclination and collision risk, and two bias models:
//! the normalized kernel-weighted mean offset (`sigma_o`) and the weighted
//! mean absolute height deviation (`sigma_h`).

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{pca_normal, GridSpec};
use crate::reprojection::SparseElevationGrid;

/// Compact-support sparse kernel: 1 at `d = 0`, falling smoothly to 0 at
/// `d = l` and identically 0 beyond.
pub fn bgk_kernel(d: f64, l: f64) -> f64 {
    let x = d / l;
    if !(x < 1.0) {
        return 0.0;
    }
    let a = 2.0 * PI * x;
    ((2.0 + a.cos()) / 3.0) * (1.0 - x) + a.sin() / (2.0 * PI)
}

/// [`bgk_kernel`] scaled by the neighbor's steppability `1 − r_step`.
pub fn tbgk_kernel(d: f64, l: f64, r_step_neighbor: f64) -> f64 {
    (1.0 - r_step_neighbor) * bgk_kernel(d, l)
}

/// How height inference weights its neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Traversability-aware weights `(1 − r_step) · k(d, l)`.
    Traversability,
    /// Plain kernel weights `k(d, l)`.
    Vanilla,
}

/// Normalization of the inclination risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclinationNorm {
    /// Divide the steepest angle by `2π` (so the layer saturates at 0.25).
    TwoPi,
    /// Divide by `π/2` (so a vertical step reads 1).
    HalfPi,
}

impl InclinationNorm {
    fn divisor(self) -> f64 {
        match self {
            InclinationNorm::TwoPi => 2.0 * PI,
            InclinationNorm::HalfPi => PI / 2.0,
        }
    }
}

/// Neighborhood used for the inclination and collision layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskNeighborhood {
    /// The eight adjacent cells.
    Adjacent,
    /// Every cell within the prediction radius `l`.
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionParams {
    pub kernel_radius: f64,
    pub tau_h: f64,
    pub weighting: Weighting,
    /// Restrict inference to cells within the azimuth observation bound.
    pub bound_by_observation: bool,
    pub risk_neighborhood: RiskNeighborhood,
    pub incl_norm: InclinationNorm,
    /// Lower bound on the biases of observed cells.
    pub sigma_min: f64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            kernel_radius: 0.5,
            tau_h: 0.25,
            weighting: Weighting::Traversability,
            bound_by_observation: true,
            risk_neighborhood: RiskNeighborhood::Adjacent,
            incl_norm: InclinationNorm::TwoPi,
            sigma_min: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Observed,
    Inferred,
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCell {
    pub o: [f64; 2],
    pub h_max: f64,
    pub h_min: f64,
    pub n_z: f64,
    pub r_step: f64,
    pub r_incl: f64,
    pub r_coll: f64,
    pub sigma_o: f64,
    pub sigma_h: f64,
    /// `Observed` or `Inferred`; empty cells are `None` in the map.
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerrainMap {
    pub spec: GridSpec,
    pub cells: Vec<Option<LocalCell>>,
}

impl LocalTerrainMap {
    pub fn get(&self, ix: usize, iy: usize) -> Option<&LocalCell> {
        self.cells[self.spec.index(ix, iy)].as_ref()
    }

    pub fn provenance(&self, ix: usize, iy: usize) -> Provenance {
        self.get(ix, iy).map_or(Provenance::Empty, |c| c.provenance)
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        match provenance {
            Provenance::Empty => self.cells.iter().filter(|c| c.is_none()).count(),
            p => self.cells.iter().flatten().filter(|c| c.provenance == p).count(),
        }
    }
}

/// Precomputed cell offsets of a radius-`l` disk with their kernel values,
/// in a fixed row-major order.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub radius: f64,
    offsets: Vec<Offset>,
}

#[derive(Debug, Clone, Copy)]
struct Offset {
    dx: isize,
    dy: isize,
    dist: f64,
    weight: f64,
}

impl Kernel {
    pub fn new(resolution: f64, radius: f64) -> Self {
        let reach = (radius / resolution).ceil() as isize;
        let mut offsets = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let dist = (dx as f64).hypot(dy as f64) * resolution;
                if dist < radius {
                    offsets.push(Offset {
                        dx,
                        dy,
                        dist,
                        weight: bgk_kernel(dist, radius),
                    });
                }
            }
        }
        Self { radius, offsets }
    }

    fn adjacent(resolution: f64) -> Self {
        let mut offsets = Vec::with_capacity(9);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                offsets.push(Offset {
                    dx,
                    dy,
                    dist: (dx as f64).hypot(dy as f64) * resolution,
                    weight: 1.0,
                });
            }
        }
        Self {
            radius: resolution * 2f64.sqrt(),
            offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Neighbors of `(ix, iy)` inside `spec`, paired with their offset.
    fn around<'a>(
        &'a self,
        spec: &'a GridSpec,
        ix: usize,
        iy: usize,
    ) -> impl Iterator<Item = (usize, &'a Offset)> + 'a {
        self.offsets.iter().filter_map(move |o| {
            let x = ix as isize + o.dx;
            let y = iy as isize + o.dy;
            (x >= 0 && y >= 0 && (x as usize) < spec.cols && (y as usize) < spec.rows)
                .then(|| (spec.index(x as usize, y as usize), o))
        })
    }
}

/// Result of kernel inference at one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellInference {
    pub h_max: f64,
    pub h_min: f64,
    pub r_step: f64,
    pub sigma_o: f64,
    pub sigma_h: f64,
}

/// Kernel inference at `(ix, iy)` from the observed cells of `grid` within
/// radius `l`. `None` when every height weight vanishes.
pub fn infer_cell(
    grid: &SparseElevationGrid,
    ix: usize,
    iy: usize,
    l: f64,
    weighting: Weighting,
) -> Option<CellInference> {
    infer_with(&Kernel::new(grid.spec.resolution, l), grid, ix, iy, weighting)
}

/// [`infer_cell`] with a precomputed kernel.
pub fn infer_with(
    kernel: &Kernel,
    grid: &SparseElevationGrid,
    ix: usize,
    iy: usize,
    weighting: Weighting,
) -> Option<CellInference> {
    let spec = &grid.spec;
    let res = spec.resolution;
    let (mut w_sum, mut h_max, mut h_min, mut off_x, mut off_y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut wb_sum, mut r_sum) = (0.0, 0.0);
    for (j, o) in kernel.around(spec, ix, iy) {
        let Some(c) = &grid.cells[j] else { continue };
        let w = height_weight(o.weight, c.r_step, weighting);
        w_sum += w;
        h_max += w * c.h_max;
        h_min += w * c.h_min;
        off_x += w * o.dx as f64 * res;
        off_y += w * o.dy as f64 * res;
        wb_sum += o.weight;
        r_sum += o.weight * c.r_step;
    }
    if !(w_sum > 0.0) {
        return None;
    }
    let h_max = h_max / w_sum;
    let h_min = (h_min / w_sum).min(h_max);
    let sigma_h = height_bias(kernel, grid, ix, iy, weighting, h_max, w_sum);
    Some(CellInference {
        h_max,
        h_min,
        r_step: (r_sum / wb_sum).clamp(0.0, 1.0),
        sigma_o: (off_x.hypot(off_y) / (kernel.radius * w_sum)).clamp(0.0, 1.0),
        sigma_h,
    })
}

#[inline]
fn height_weight(k: f64, r_step: f64, weighting: Weighting) -> f64 {
    match weighting {
        Weighting::Traversability => (1.0 - r_step) * k,
        Weighting::Vanilla => k,
    }
}

fn height_bias(
    kernel: &Kernel,
    grid: &SparseElevationGrid,
    ix: usize,
    iy: usize,
    weighting: Weighting,
    reference: f64,
    w_sum: f64,
) -> f64 {
    let mut acc = 0.0;
    for (j, o) in kernel.around(&grid.spec, ix, iy) {
        if let Some(c) = &grid.cells[j] {
            acc += height_weight(o.weight, c.r_step, weighting) * (c.h_max - reference).abs();
        }
    }
    (acc / w_sum).clamp(0.0, 1.0)
}

/// Completes `grid` into a dense local terrain map.
pub fn complete(grid: &SparseElevationGrid, params: &CompletionParams) -> LocalTerrainMap {
    let spec = grid.spec;
    let kernel = Kernel::new(spec.resolution, params.kernel_radius);
    let risk_kernel = match params.risk_neighborhood {
        RiskNeighborhood::Adjacent => Kernel::adjacent(spec.resolution),
        RiskNeighborhood::Kernel => kernel.clone(),
    };

    let heights: Vec<Option<LocalCell>> = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let (ix, iy) = spec.coords(idx);
            if let Some(obs) = &grid.cells[idx] {
                let biases = infer_with(&kernel, grid, ix, iy, params.weighting)
                    .map(|inf| (inf.sigma_o, inf.sigma_h))
                    .unwrap_or((0.0, 0.0));
                return Some(LocalCell {
                    o: obs.o,
                    h_max: obs.h_max,
                    h_min: obs.h_min,
                    n_z: obs.n_z,
                    r_step: obs.r_step,
                    r_incl: 0.0,
                    r_coll: 0.0,
                    sigma_o: biases.0.max(params.sigma_min),
                    sigma_h: biases.1.max(params.sigma_min),
                    provenance: Provenance::Observed,
                });
            }
            if params.bound_by_observation && !grid.within_observation(ix, iy) {
                return None;
            }
            let inf = infer_with(&kernel, grid, ix, iy, params.weighting)?;
            Some(LocalCell {
                o: spec.center(ix, iy),
                h_max: inf.h_max,
                h_min: inf.h_min,
                n_z: 0.0,
                r_step: inf.r_step,
                r_incl: 0.0,
                r_coll: 0.0,
                sigma_o: inf.sigma_o,
                sigma_h: inf.sigma_h,
                provenance: Provenance::Inferred,
            })
        })
        .collect();

    let partial = LocalTerrainMap { spec, cells: heights };
    let cells = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let mut cell = partial.cells[idx]?;
            let (ix, iy) = spec.coords(idx);
            if cell.provenance == Provenance::Inferred {
                cell.n_z = verticality_with(&kernel, &partial, ix, iy);
            }
            cell.r_incl = inclination_with(&risk_kernel, &partial, ix, iy, params.incl_norm);
            cell.r_coll = collision_with(&risk_kernel, &partial, ix, iy, params.tau_h);
            Some(cell)
        })
        .collect();
    LocalTerrainMap { spec, cells }
}

/// Steepest slope angle to any non-empty neighbor within `radius`,
/// normalized by `norm`.
pub fn inclination_risk(local: &LocalTerrainMap, ix: usize, iy: usize, radius: f64, norm: InclinationNorm) -> f64 {
    inclination_with(&Kernel::new(local.spec.resolution, radius), local, ix, iy, norm)
}

fn inclination_with(kernel: &Kernel, local: &LocalTerrainMap, ix: usize, iy: usize, norm: InclinationNorm) -> f64 {
    let Some(center) = local.get(ix, iy) else {
        return 0.0;
    };
    let mut steepest: f64 = 0.0;
    for (j, o) in kernel.around(&local.spec, ix, iy) {
        if o.dist == 0.0 {
            continue;
        }
        if let Some(c) = &local.cells[j] {
            let slope = ((center.h_max - c.h_max).abs() / o.dist).clamp(0.0, 1.0);
            steepest = steepest.max(slope.asin());
        }
    }
    (steepest / norm.divisor()).clamp(0.0, 1.0)
}

/// Largest height span `h_max − h_min` among the non-empty cells within
/// `radius` (the cell itself included), relative to `tau_h` and capped at 1.
pub fn collision_risk(local: &LocalTerrainMap, ix: usize, iy: usize, radius: f64, tau_h: f64) -> f64 {
    collision_with(&Kernel::new(local.spec.resolution, radius), local, ix, iy, tau_h)
}

fn collision_with(kernel: &Kernel, local: &LocalTerrainMap, ix: usize, iy: usize, tau_h: f64) -> f64 {
    let span = kernel
        .around(&local.spec, ix, iy)
        .filter_map(|(j, _)| local.cells[j].as_ref())
        .map(|c| c.h_max - c.h_min)
        .fold(0.0f64, f64::max);
    (span / tau_h).min(1.0)
}

/// Verticality of an inferred cell: `n_z` of the plane fitted to the
/// `(x, y, h_max)` of the non-empty cells within `radius`. Falls back to the
/// nearest observed cell's `n_z`, then to 0.
pub fn inferred_verticality(local: &LocalTerrainMap, ix: usize, iy: usize, radius: f64) -> f64 {
    verticality_with(&Kernel::new(local.spec.resolution, radius), local, ix, iy)
}

fn verticality_with(kernel: &Kernel, local: &LocalTerrainMap, ix: usize, iy: usize) -> f64 {
    let mut points = Vec::with_capacity(kernel.len());
    let mut nearest: Option<(f64, f64)> = None;
    for (j, o) in kernel.around(&local.spec, ix, iy) {
        let Some(c) = &local.cells[j] else { continue };
        points.push(Vector3::new(c.o[0], c.o[1], c.h_max));
        if c.provenance == Provenance::Observed && nearest.map_or(true, |(d, _)| o.dist < d) {
            nearest = Some((o.dist, c.n_z));
        }
    }
    match pca_normal(&points) {
        Some(n) => n.z.clamp(0.0, 1.0),
        None => nearest.map_or(0.0, |(_, n_z)| n_z),
    }
}
