//! Terrain traversability mapping for legged robots.
//!
//! The pipeline turns range scans and poses into a fused 2.5D terrain map
//! that carries steppability, inclination and collision risk layers:
//!
//! 1. [`projection`]: spherical range-image projection into a surfel map
//!    with PCA normals.
//! 2. [`steppability`]: per-pixel steppability risk (verticality ×
//!    proximity) followed by conditional pooling.
//! 3. [`reprojection`]: bottom-up re-projection into a world-frame sparse
//!    elevation grid with overhang rejection.
//! 4. [`completion`]: traversability-aware kernel inference (T-BGK) that
//!    densifies the grid and embeds risk layers and bias models.
//! 5. [`fusion`]: Mahalanobis-gated Kalman fusion into a static map, with a
//!    log-odds collision layer.
//!
//! [`sim`] and [`eval`] provide synthetic scenes, ground truth and scoring;
//! [`io`], [`config`] and [`pipeline`] carry the file formats and
//! orchestration used by the `trip` binary.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod projection;
pub mod reprojection;
pub mod sim;
pub mod steppability;

pub use completion::{LocalCell, LocalTerrainMap, Provenance};
pub use config::{Ablation, DecisionRule, EvalConfig, InclinationNorm, PipelineConfig};
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use fusion::{CellIndex, FusedCell, MapSnapshot, SnapshotCell, StaticTerrainMap};
pub use geometry::{GridSpec, Pose};
pub use pipeline::{Pipeline, PipelineOutput, ScanReport, StageTimings};
pub use projection::{RangeScan, SensorIntrinsics, Surfel, SurfelMap};
pub use reprojection::{ObservedCell, SparseElevationGrid};
pub use sim::{GroundTruthGrid, Scene};
pub use steppability::RiskImage;
