//! Synthetic scenes, range-scan simulation and ground truth.

mod raycast;
mod scene;
mod truth;

pub use raycast::{nearest_hit, pixel_rng, raycast_scan, raycast_shapes, Polytope, ScanRequest};
pub use scene::{ActorSpec, Bounds, BoxSpec, PlaneSpec, RampSpec, RobotPath, Scene, StairsSpec};
pub use truth::{ground_truth, surface_height, Connectivity, GroundTruthGrid, TruthParams};

use crate::error::Result;
use crate::geometry::Pose;
use crate::projection::{RangeScan, SensorIntrinsics};

/// Default maximum sensing range in meters.
pub const MAX_RANGE: f64 = 100.0;

/// Scans and poses along the scene's robot path.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
    pub scans: Vec<RangeScan>,
}

pub fn simulate(scene: &Scene, intrinsics: &SensorIntrinsics, seed: u64) -> Result<Simulation> {
    scene.validate()?;
    intrinsics.validate()?;
    let path = scene.robot_poses()?;
    let statics = scene.static_polytopes();
    let mut sim = Simulation {
        times: Vec::with_capacity(path.len()),
        poses: Vec::with_capacity(path.len()),
        scans: Vec::with_capacity(path.len()),
    };
    for (k, (time, pose)) in path.into_iter().enumerate() {
        let mut shapes = statics.clone();
        shapes.extend(scene.actor_polytopes(time));
        let scan = raycast_shapes(
            &shapes,
            &ScanRequest {
                pose: &pose,
                intrinsics,
                time,
                noise_sigma: scene.noise_sigma,
                seed,
                scan_index: k as u64,
                max_range: MAX_RANGE,
            },
        );
        sim.times.push(time);
        sim.poses.push(pose);
        sim.scans.push(scan);
    }
    Ok(sim)
}
