//! Fixtures for the stage benchmarks: one simulated scan, its intermediate
//! products and a map warmed up on the scans before it.

use trip_core::completion::complete;
use trip_core::pipeline::LocalProducts;
use trip_core::projection::build_surfel_map;
use trip_core::reprojection::reproject;
use trip_core::sim::simulate;
use trip_core::steppability::{conditional_pool, raw_steppability};
use trip_core::{Pipeline, PipelineConfig, Pose, RangeScan, RiskImage, Scene, StaticTerrainMap, SurfelMap};

pub const STAIRS_BOXES: &str = include_str!("../../../scenes/stairs_boxes.toml");

pub struct Fixture {
    pub config: PipelineConfig,
    pub scan: RangeScan,
    pub pose: Pose,
    pub surfels: SurfelMap,
    pub raw: RiskImage,
    pub risk: RiskImage,
    pub products: LocalProducts,
    /// Fused map before `scan` is integrated.
    pub map: StaticTerrainMap,
}

impl Fixture {
    /// Scan `index` of `scene` under `config`.
    pub fn new(scene: &str, config: PipelineConfig, index: usize) -> Self {
        let scene = Scene::from_toml(scene).expect("bench scene");
        let sim = simulate(&scene, &config.sensor, config.seed).expect("simulation");
        assert!(index < sim.scans.len(), "scene has {} scans", sim.scans.len());
        let mut pipeline = Pipeline::new(config.clone()).expect("config");
        for (scan, pose) in sim.scans.iter().zip(&sim.poses).take(index) {
            pipeline.process(scan, pose).expect("warm-up scan");
        }
        let scan = sim.scans[index].clone();
        let pose = sim.poses[index];
        let c = &config;
        let surfels = build_surfel_map(&scan, &c.sensor, &c.surfel_params());
        let raw = raw_steppability(&surfels, c.steppability.kernel, c.steppability.literal_prox);
        let risk = conditional_pool(&raw, c.steppability.kernel, c.steppability.tau_r);
        let window = pipeline.window(&pose).expect("window");
        let sparse = reproject(&surfels, &risk, &pose, &window, c.reprojection.h_p).expect("reprojection");
        let local = complete(&sparse, &c.completion_params());
        Self {
            config,
            scan,
            pose,
            surfels,
            raw,
            risk,
            products: LocalProducts { window, sparse, local },
            map: pipeline.into_map(),
        }
    }

    pub fn stairs_boxes(config: PipelineConfig) -> Self {
        Self::new(STAIRS_BOXES, config, 100)
    }
}
