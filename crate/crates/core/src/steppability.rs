//! Steppability risk in the projection raster.
//!
//! Raw risk at a pixel is one minus the geometric mean of its verticality
//! `n_z` and the average proximity (surface continuity) to its valid window
//! neighbors. Conditional pooling then replaces each value by the window
//! maximum where the window mean exceeds `tau_r`, and by the mean elsewhere.

use rayon::prelude::*;

use crate::projection::{SensorIntrinsics, Surfel, SurfelMap};

/// Per-pixel risk raster; `None` marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskImage {
    pub intrinsics: SensorIntrinsics,
    pub values: Vec<Option<f64>>,
}

impl RiskImage {
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.values[self.intrinsics.pixel_index(u, v)]
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Separation below which two surfels count as the same point.
const MIN_SEPARATION: f64 = 1e-9;

/// Surface continuity between two surfels in `[0, 1]`: `|n_a·n_b|` times one
/// minus the larger normal-direction offset ratio. Coplanar neighbors score 1,
/// a displacement along either normal scores 0.
///
/// With `literal` set the ratio itself is used instead of its complement.
pub fn proximity(a: &Surfel, b: &Surfel, literal: bool) -> f64 {
    let delta = b.p - a.p;
    let dist = delta.norm();
    if dist <= MIN_SEPARATION {
        return 1.0;
    }
    let alignment = a.n.dot(&b.n).abs();
    let offset = a.n.dot(&delta).abs().max(b.n.dot(&(-delta)).abs()) / dist;
    let offset = offset.clamp(0.0, 1.0);
    let score = if literal { offset } else { 1.0 - offset };
    (alignment * score).clamp(0.0, 1.0)
}

/// Raw steppability risk per valid surfel; the center pixel is excluded from
/// its own neighbor set and pixels without valid neighbors are invalid.
pub fn raw_steppability(surfels: &SurfelMap, kernel: usize, literal_prox: bool) -> RiskImage {
    let intr = surfels.intrinsics;
    let values = (0..intr.len())
        .into_par_iter()
        .map(|idx| {
            let center = &surfels.cells[idx];
            if !center.valid {
                return None;
            }
            let (u, v) = (idx % intr.width, idx / intr.width);
            let (mut sum, mut count) = (0.0, 0usize);
            for j in intr.window(u, v, kernel) {
                let other = &surfels.cells[j];
                if j == idx || !other.valid {
                    continue;
                }
                sum += proximity(other, center, literal_prox);
                count += 1;
            }
            if count == 0 {
                return None;
            }
            let mean = center.n.z * sum / count as f64;
            Some((1.0 - mean.max(0.0).sqrt()).clamp(0.0, 1.0))
        })
        .collect();
    RiskImage {
        intrinsics: intr,
        values,
    }
}

/// Conditional pooling: window maximum where the window mean of valid raw
/// risks exceeds `tau_r`, the mean otherwise. Invalid pixels stay invalid.
pub fn conditional_pool(raw: &RiskImage, kernel: usize, tau_r: f64) -> RiskImage {
    let intr = raw.intrinsics;
    let values = (0..intr.len())
        .into_par_iter()
        .map(|idx| {
            raw.values[idx]?;
            let (u, v) = (idx % intr.width, idx / intr.width);
            let (mut sum, mut max, mut count) = (0.0, f64::NEG_INFINITY, 0usize);
            for r in intr.window(u, v, kernel).filter_map(|j| raw.values[j]) {
                sum += r;
                max = max.max(r);
                count += 1;
            }
            let mean = sum / count as f64;
            Some(if mean > tau_r { max } else { mean })
        })
        .collect();
    RiskImage {
        intrinsics: intr,
        values,
    }
}
