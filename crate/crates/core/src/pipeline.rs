//! Per-scan orchestration of the five stages.

use std::time::{Duration, Instant};

use crate::completion::{complete, LocalTerrainMap, Provenance};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fusion::{StaticTerrainMap, UpdateReport};
use crate::geometry::{GridSpec, Pose};
use crate::projection::{build_surfel_map, RangeScan};
use crate::reprojection::{reproject, SparseElevationGrid};
use crate::steppability::{conditional_pool, raw_steppability};

/// Wall-clock time spent in each stage of one scan.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub projection: Duration,
    pub steppability: Duration,
    pub reprojection: Duration,
    pub completion: Duration,
    pub fusion: Duration,
}

impl StageTimings {
    /// Time to build the local terrain map.
    pub fn local(&self) -> Duration {
        self.projection + self.steppability + self.reprojection + self.completion
    }

    pub fn total(&self) -> Duration {
        self.local() + self.fusion
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub index: usize,
    pub timings: StageTimings,
    pub observed: usize,
    pub inferred: usize,
    pub update: UpdateReport,
}

/// Intermediate products of one scan.
#[derive(Debug, Clone)]
pub struct LocalProducts {
    pub window: GridSpec,
    pub sparse: SparseElevationGrid,
    pub local: LocalTerrainMap,
}

/// Incremental mapper holding the fused map.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    map: StaticTerrainMap,
    scans: usize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let map = StaticTerrainMap::new(config.grid.resolution, config.fusion.tile_size)?;
        Ok(Self { config, map, scans: 0 })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn map(&self) -> &StaticTerrainMap {
        &self.map
    }

    pub fn into_map(self) -> StaticTerrainMap {
        self.map
    }

    /// Local window centered on the sensor.
    pub fn window(&self, pose: &Pose) -> Result<GridSpec> {
        GridSpec::centered(
            [pose.translation.x, pose.translation.y],
            self.config.grid.extent,
            self.config.grid.resolution,
        )
    }

    /// Runs the local stages on `scan` without touching the fused map.
    pub fn build_local(&self, scan: &RangeScan, pose: &Pose) -> Result<(LocalProducts, StageTimings)> {
        let c = &self.config;
        let mut t = StageTimings::default();

        let start = Instant::now();
        let surfels = build_surfel_map(scan, &c.sensor, &c.surfel_params());
        t.projection = start.elapsed();

        let start = Instant::now();
        let raw = raw_steppability(&surfels, c.steppability.kernel, c.steppability.literal_prox);
        let risk = if c.steppability.pooling {
            conditional_pool(&raw, c.steppability.kernel, c.steppability.tau_r)
        } else {
            raw
        };
        t.steppability = start.elapsed();

        let start = Instant::now();
        let window = self.window(pose)?;
        let sparse = reproject(&surfels, &risk, pose, &window, c.reprojection.h_p)?;
        t.reprojection = start.elapsed();

        let start = Instant::now();
        let local = complete(&sparse, &c.completion_params());
        t.completion = start.elapsed();

        Ok((LocalProducts { window, sparse, local }, t))
    }

    /// Processes one scan and fuses it into the map.
    pub fn process(&mut self, scan: &RangeScan, pose: &Pose) -> Result<ScanReport> {
        let index = self.scans;
        self.process_detailed(scan, pose)
            .map(|(report, _)| report)
            .map_err(|e| Error::Scan {
                index,
                source: Box::new(e),
            })
    }

    /// [`Pipeline::process`], also returning the local products.
    pub fn process_detailed(&mut self, scan: &RangeScan, pose: &Pose) -> Result<(ScanReport, LocalProducts)> {
        let (products, mut timings) = self.build_local(scan, pose)?;
        let start = Instant::now();
        let update = self
            .map
            .gate_and_update(&products.local, &self.config.fusion_params())?;
        timings.fusion = start.elapsed();
        let report = ScanReport {
            index: self.scans,
            timings,
            observed: products.local.count(Provenance::Observed),
            inferred: products.local.count(Provenance::Inferred),
            update,
        };
        self.scans += 1;
        Ok((report, products))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub map: StaticTerrainMap,
    pub reports: Vec<ScanReport>,
}

/// Maps a whole sequence. `scans` and `poses` must have equal length.
pub fn run_pipeline<I>(config: PipelineConfig, scans: I, poses: &[Pose]) -> Result<PipelineOutput>
where
    I: IntoIterator<Item = Result<RangeScan>>,
{
    let mut pipeline = Pipeline::new(config)?;
    let mut reports = Vec::with_capacity(poses.len());
    let mut scans = scans.into_iter();
    for (index, pose) in poses.iter().enumerate() {
        let scan = match scans.next() {
            Some(s) => s.map_err(|e| Error::Scan {
                index,
                source: Box::new(e),
            })?,
            None => return Err(Error::Config(format!("{} poses but only {index} scans", poses.len()))),
        };
        reports.push(pipeline.process(&scan, pose)?);
    }
    if scans.next().is_some() {
        return Err(Error::Config(format!("more scans than the {} poses", poses.len())));
    }
    Ok(PipelineOutput {
        map: pipeline.into_map(),
        reports,
    })
}
