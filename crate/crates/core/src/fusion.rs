//! Recursive fusion of local terrain maps into a world-anchored static map.
//!
//! Each local cell is first compared against the fused estimate with a
//! Mahalanobis test on `(n_z, r_step)`. Accepted measurements update five
//! scalar Kalman filters (`h_max`, `h_min`, `n_z`, `r_step`, `r_incl`), using
//! the completion biases as measurement noise. Collision risk is fused in
//! log-odds. Rejected measurements leave the estimate untouched.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::completion::LocalTerrainMap;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;

/// Global lattice coordinates: cell `(ix, iy)` covers
/// `[ix·res, (ix+1)·res) × [iy·res, (iy+1)·res)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub ix: i64,
    pub iy: i64,
}

impl CellIndex {
    pub fn new(ix: i64, iy: i64) -> Self {
        Self { ix, iy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionParams {
    /// Gate threshold on the squared Mahalanobis distance.
    pub tau_m: f64,
    pub process_var: f64,
    pub var_init: f64,
    /// Clamp applied to collision risk before the log-odds update.
    pub eps: f64,
    pub sigma_min: f64,
    pub scale_h: f64,
    pub scale_o: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            tau_m: 3.0,
            process_var: 1e-4,
            var_init: 0.04,
            eps: 0.01,
            sigma_min: 0.01,
            scale_h: 1.0,
            scale_o: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedCell {
    pub h_max: f64,
    pub var_h_max: f64,
    pub h_min: f64,
    pub var_h_min: f64,
    pub n_z: f64,
    pub var_n_z: f64,
    pub r_step: f64,
    pub var_r_step: f64,
    pub r_incl: f64,
    pub var_r_incl: f64,
    pub coll_logodds: f64,
    pub update_count: u64,
    pub last_rejected: bool,
}

impl FusedCell {
    /// Collision risk realized from the log-odds accumulator.
    pub fn r_coll(&self) -> f64 {
        collision_probability(self.coll_logodds)
    }

    /// Collision probability of the average per-update log-odds.
    pub fn r_coll_mean(&self) -> f64 {
        collision_probability(self.coll_logodds / self.update_count.max(1) as f64)
    }

    /// Equality of every estimated quantity, ignoring the rejection flag.
    pub fn same_estimate(&self, other: &FusedCell) -> bool {
        let strip = |c: &FusedCell| FusedCell {
            last_rejected: false,
            ..*c
        };
        strip(self).to_bits() == strip(other).to_bits()
    }

    fn to_bits(self) -> [u64; 12] {
        [
            self.h_max.to_bits(),
            self.var_h_max.to_bits(),
            self.h_min.to_bits(),
            self.var_h_min.to_bits(),
            self.n_z.to_bits(),
            self.var_n_z.to_bits(),
            self.r_step.to_bits(),
            self.var_r_step.to_bits(),
            self.r_incl.to_bits(),
            self.var_r_incl.to_bits(),
            self.coll_logodds.to_bits(),
            self.update_count,
        ]
    }
}

/// One measurement of a fused cell, as produced by completion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub h_max: f64,
    pub h_min: f64,
    pub n_z: f64,
    pub r_step: f64,
    pub r_incl: f64,
    pub r_coll: f64,
    pub sigma_o: f64,
    pub sigma_h: f64,
}

impl Measurement {
    fn noise(&self, params: &FusionParams) -> (f64, f64) {
        let floor = params.sigma_min * params.sigma_min;
        let h = (params.scale_h * self.sigma_h).powi(2).max(floor);
        let o = (params.scale_o * self.sigma_o).powi(2).max(floor);
        (h, o)
    }
}

/// Squared Mahalanobis distance of `(n_z, r_step)` from the prior, with the
/// prior variances on the diagonal.
pub fn mahalanobis_distance(n_z: f64, r_step: f64, prior: &FusedCell) -> f64 {
    let dn = n_z - prior.n_z;
    let dr = r_step - prior.r_step;
    dn * dn / prior.var_n_z + dr * dr / prior.var_r_step
}

/// Scalar Kalman predict + correct.
pub fn kalman_update(mean: f64, var: f64, value: f64, noise_var: f64, process_var: f64) -> (f64, f64) {
    let var = var + process_var;
    let gain = var / (var + noise_var);
    // 1 - gain, without cancelling when the gain is close to one
    let keep = noise_var / (var + noise_var);
    (mean + gain * (value - mean), var * keep)
}

/// Log-odds increment of collision risk `r`, clamped to `[eps, 1 − eps]`.
pub fn collision_logit(r: f64, eps: f64) -> f64 {
    let r = r.clamp(eps, 1.0 - eps);
    (r / (1.0 - r)).ln()
}

pub fn collision_probability(logodds: f64) -> f64 {
    1.0 - 1.0 / (1.0 + logodds.exp())
}

/// Adds one collision observation to `cell`.
pub fn logit_update_collision(cell: &mut FusedCell, r_coll: f64, eps: f64) {
    cell.coll_logodds += collision_logit(r_coll, eps);
}

fn initialize(m: &Measurement, params: &FusionParams) -> FusedCell {
    let (rh, ro) = m.noise(params);
    let vh = rh.max(params.var_init);
    let vo = ro.max(params.var_init);
    FusedCell {
        h_max: m.h_max,
        var_h_max: vh,
        h_min: m.h_min.min(m.h_max),
        var_h_min: vh,
        n_z: m.n_z.clamp(0.0, 1.0),
        var_n_z: vo,
        r_step: m.r_step.clamp(0.0, 1.0),
        var_r_step: vo,
        r_incl: m.r_incl.clamp(0.0, 1.0),
        var_r_incl: vo,
        coll_logodds: collision_logit(m.r_coll, params.eps),
        update_count: 1,
        last_rejected: false,
    }
}

fn update(cell: &mut FusedCell, m: &Measurement, params: &FusionParams) {
    let (rh, ro) = m.noise(params);
    let q = params.process_var;
    (cell.h_max, cell.var_h_max) = kalman_update(cell.h_max, cell.var_h_max, m.h_max, rh, q);
    (cell.h_min, cell.var_h_min) = kalman_update(cell.h_min, cell.var_h_min, m.h_min, rh, q);
    (cell.n_z, cell.var_n_z) = kalman_update(cell.n_z, cell.var_n_z, m.n_z, ro, q);
    (cell.r_step, cell.var_r_step) = kalman_update(cell.r_step, cell.var_r_step, m.r_step, ro, q);
    (cell.r_incl, cell.var_r_incl) = kalman_update(cell.r_incl, cell.var_r_incl, m.r_incl, ro, q);
    logit_update_collision(cell, m.r_coll, params.eps);
    cell.n_z = cell.n_z.clamp(0.0, 1.0);
    cell.r_step = cell.r_step.clamp(0.0, 1.0);
    cell.r_incl = cell.r_incl.clamp(0.0, 1.0);
    let (lo, hi) = (cell.h_min.min(cell.h_max), cell.h_min.max(cell.h_max));
    cell.h_min = lo;
    cell.h_max = hi;
    cell.update_count += 1;
    cell.last_rejected = false;
}

/// Outcome of fusing one measurement into a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fused {
    Initialized,
    Accepted,
    Rejected,
}

/// Gates `m` against `slot` and fuses it if accepted.
pub fn fuse_cell(slot: &mut Option<FusedCell>, m: &Measurement, params: &FusionParams) -> Fused {
    match slot {
        None => {
            *slot = Some(initialize(m, params));
            Fused::Initialized
        }
        Some(cell) => {
            let d = mahalanobis_distance(m.n_z, m.r_step, cell);
            if d < params.tau_m {
                update(cell, m, params);
                Fused::Accepted
            } else {
                cell.last_rejected = true;
                Fused::Rejected
            }
        }
    }
}

/// Per-scan fusion summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub initialized: usize,
    pub accepted: usize,
    /// Cells whose measurement failed the gate, in row-major local order.
    pub rejected: Vec<CellIndex>,
}

#[derive(Debug, Clone)]
struct Tile {
    cells: Vec<Option<FusedCell>>,
}

/// World-anchored fused map stored as square tiles allocated on demand.
#[derive(Debug, Clone)]
pub struct StaticTerrainMap {
    resolution: f64,
    tile_size: usize,
    tiles: HashMap<(i64, i64), Tile>,
}

pub const DEFAULT_TILE_SIZE: usize = 64;

impl StaticTerrainMap {
    pub fn new(resolution: f64, tile_size: usize) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::Grid(format!("resolution must be positive, got {resolution}")));
        }
        if tile_size == 0 {
            return Err(Error::Grid("tile size must be positive".into()));
        }
        Ok(Self {
            resolution,
            tile_size,
            tiles: HashMap::new(),
        })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn tile_size(&self) -> usize {
        self.tile_size
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    pub fn len(&self) -> usize {
        self.tiles
            .values()
            .map(|t| t.cells.iter().filter(|c| c.is_some()).count())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn split(&self, idx: CellIndex) -> ((i64, i64), usize) {
        let t = self.tile_size as i64;
        let key = (idx.ix.div_euclid(t), idx.iy.div_euclid(t));
        let (lx, ly) = (idx.ix.rem_euclid(t), idx.iy.rem_euclid(t));
        (key, ly as usize * self.tile_size + lx as usize)
    }

    pub fn get(&self, idx: CellIndex) -> Option<&FusedCell> {
        let (key, slot) = self.split(idx);
        self.tiles.get(&key)?.cells[slot].as_ref()
    }

    fn slot_mut(&mut self, idx: CellIndex) -> &mut Option<FusedCell> {
        let (key, slot) = self.split(idx);
        let n = self.tile_size * self.tile_size;
        &mut self
            .tiles
            .entry(key)
            .or_insert_with(|| Tile { cells: vec![None; n] })
            .cells[slot]
    }

    pub fn insert(&mut self, idx: CellIndex, cell: FusedCell) {
        *self.slot_mut(idx) = Some(cell);
    }

    /// World center of a lattice cell.
    pub fn center(&self, idx: CellIndex) -> [f64; 2] {
        [
            (idx.ix as f64 + 0.5) * self.resolution,
            (idx.iy as f64 + 0.5) * self.resolution,
        ]
    }

    /// All populated cells sorted by `(iy, ix)`.
    pub fn cells(&self) -> Vec<(CellIndex, FusedCell)> {
        let mut out: Vec<_> = self
            .tiles
            .iter()
            .flat_map(|(&(tx, ty), tile)| {
                let t = self.tile_size;
                tile.cells.iter().enumerate().filter_map(move |(i, c)| {
                    c.map(|c| {
                        let ix = tx * t as i64 + (i % t) as i64;
                        let iy = ty * t as i64 + (i / t) as i64;
                        (CellIndex::new(ix, iy), c)
                    })
                })
            })
            .collect();
        out.sort_by_key(|(idx, _)| (idx.iy, idx.ix));
        out
    }

    /// Lattice offset of `spec`, checking it shares this map's lattice.
    pub fn align(&self, spec: &GridSpec) -> Result<(i64, i64)> {
        if (spec.resolution - self.resolution).abs() > 1e-12 * self.resolution {
            return Err(Error::Lattice(format!(
                "grid resolution {} differs from map resolution {}",
                spec.resolution, self.resolution
            )));
        }
        spec.lattice_offset()
    }

    /// Gates every non-empty local cell and fuses the accepted ones.
    pub fn gate_and_update(&mut self, local: &LocalTerrainMap, params: &FusionParams) -> Result<UpdateReport> {
        let (ox, oy) = self.align(&local.spec)?;
        let mut report = UpdateReport::default();
        for (i, cell) in local.cells.iter().enumerate() {
            let Some(c) = cell else { continue };
            let (x, y) = local.spec.coords(i);
            let idx = CellIndex::new(ox + x as i64, oy + y as i64);
            let m = Measurement {
                h_max: c.h_max,
                h_min: c.h_min,
                n_z: c.n_z,
                r_step: c.r_step,
                r_incl: c.r_incl,
                r_coll: c.r_coll,
                sigma_o: c.sigma_o,
                sigma_h: c.sigma_h,
            };
            match fuse_cell(self.slot_mut(idx), &m, params) {
                Fused::Initialized => report.initialized += 1,
                Fused::Accepted => report.accepted += 1,
                Fused::Rejected => report.rejected.push(idx),
            }
        }
        Ok(report)
    }

    /// The seven estimated layers over `window`.
    pub fn snapshot(&self, window: &GridSpec) -> Result<MapSnapshot> {
        let (ox, oy) = self.align(window)?;
        let cells = (0..window.len())
            .map(|i| {
                let (x, y) = window.coords(i);
                self.get(CellIndex::new(ox + x as i64, oy + y as i64))
                    .map(|c| SnapshotCell {
                        o: window.center(x, y),
                        h_max: c.h_max,
                        h_min: c.h_min,
                        n_z: c.n_z,
                        r_step: c.r_step,
                        r_incl: c.r_incl,
                        r_coll: c.r_coll(),
                        r_coll_mean: c.r_coll_mean(),
                    })
            })
            .collect();
        Ok(MapSnapshot { spec: *window, cells })
    }

    /// Smallest lattice-aligned grid covering every populated cell.
    pub fn bounds(&self) -> Option<GridSpec> {
        let cells = self.cells();
        let (first, _) = cells.first()?;
        let (mut x0, mut x1, mut y0, mut y1) = (first.ix, first.ix, first.iy, first.iy);
        for (idx, _) in &cells {
            x0 = x0.min(idx.ix);
            x1 = x1.max(idx.ix);
            y0 = y0.min(idx.iy);
            y1 = y1.max(idx.iy);
        }
        GridSpec::new(
            self.resolution,
            (x1 - x0 + 1) as usize,
            (y1 - y0 + 1) as usize,
            [x0 as f64 * self.resolution, y0 as f64 * self.resolution],
        )
        .ok()
    }
}

impl PartialEq for StaticTerrainMap {
    fn eq(&self, other: &Self) -> bool {
        self.resolution.to_bits() == other.resolution.to_bits() && self.tile_size == other.tile_size && {
            let (a, b) = (self.cells(), other.cells());
            a.len() == b.len()
                && a.iter()
                    .zip(&b)
                    .all(|((i, x), (j, y))| i == j && x.same_estimate(y) && x.last_rejected == y.last_rejected)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotCell {
    pub o: [f64; 2],
    pub h_max: f64,
    pub h_min: f64,
    pub n_z: f64,
    pub r_step: f64,
    pub r_incl: f64,
    pub r_coll: f64,
    pub r_coll_mean: f64,
}

/// Dense read-only view of the fused layers over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSnapshot {
    pub spec: GridSpec,
    pub cells: Vec<Option<SnapshotCell>>,
}

impl MapSnapshot {
    pub fn get(&self, ix: usize, iy: usize) -> Option<&SnapshotCell> {
        self.cells[self.spec.index(ix, iy)].as_ref()
    }
}
