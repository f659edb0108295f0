#![allow(dead_code)]

use std::path::PathBuf;

use trip_core::config::PipelineConfig;
use trip_core::eval::evaluate;
use trip_core::fusion::StaticTerrainMap;
use trip_core::pipeline::{run_pipeline, PipelineOutput};
use trip_core::sim::{ground_truth, simulate, Simulation, TruthParams};
use trip_core::{EvalReport, GridSpec, GroundTruthGrid, MapSnapshot, Scene};

pub fn scene_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenes")
        .join(format!("{name}.toml"))
}

pub fn scene(name: &str) -> Scene {
    let text = std::fs::read_to_string(scene_path(name)).unwrap();
    Scene::from_toml(&text).unwrap()
}

pub fn sim(scene: &Scene, config: &PipelineConfig) -> Simulation {
    simulate(scene, &config.sensor, config.seed).unwrap()
}

pub fn map(config: &PipelineConfig, sim: &Simulation) -> PipelineOutput {
    run_pipeline(config.clone(), sim.scans.iter().cloned().map(Ok), &sim.poses).unwrap()
}

pub fn truth(scene: &Scene, spec: &GridSpec, config: &PipelineConfig) -> GroundTruthGrid {
    let params = TruthParams {
        tau_h: config.completion.tau_h,
        ..TruthParams::default()
    };
    ground_truth(scene, spec, &params)
}

pub fn score(map: &StaticTerrainMap, gt: &GroundTruthGrid, config: &PipelineConfig) -> (MapSnapshot, EvalReport) {
    let snap = map.snapshot(&gt.spec).unwrap();
    let report = evaluate(&snap, gt, &config.eval).unwrap();
    (snap, report)
}
