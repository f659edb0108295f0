//! Scene description: static primitives, moving actors and a robot path.
//!
//! Scenes are TOML documents; lengths are meters, angles degrees, times
//! seconds.
//!
//! ```toml
//! noise_sigma = 0.01
//! [bounds]
//! min = [-5.0, -5.0, -1.0]
//! max = [5.0, 5.0, 3.0]
//! [[plane]]
//! z = 0.0
//! [[box]]
//! center = [1.0, 0.0, 0.15]
//! size = [0.6, 0.6, 0.3]
//! yaw = 0.0
//! [[ramp]]
//! origin = [2.0, 1.0, 0.0]   # middle of the low edge
//! length = 2.0
//! width = 1.0
//! slope = 15.0
//! yaw = 90.0
//! [[stairs]]
//! origin = [-2.0, 0.0, 0.0]  # middle of the first riser's foot
//! rise = 0.2
//! run = 0.3
//! count = 4
//! width = 1.2
//! yaw = 180.0
//! [[actor]]
//! size = [0.4, 0.4, 1.6]
//! speed = 1.0
//! start_time = 1.0
//! waypoints = [[3.0, -4.0, 0.8], [3.0, 4.0, 0.8]]   # box centers
//! [robot]
//! waypoints = [[0.0, 0.0], [2.0, 0.0]]
//! speed = 0.5
//! height = 0.5
//! period = 0.1
//! scans = 20
//! ```

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

use super::raycast::Polytope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub bounds: Bounds,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub plane: Vec<PlaneSpec>,
    #[serde(default, rename = "box")]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub ramp: Vec<RampSpec>,
    #[serde(default)]
    pub stairs: Vec<StairsSpec>,
    #[serde(default)]
    pub actor: Vec<ActorSpec>,
    #[serde(default)]
    pub robot: Option<RobotPath>,
}

fn default_noise() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub z: f64,
    /// `[x_min, y_min, x_max, y_max]`; the scene bounds when absent.
    #[serde(default)]
    pub extent: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSpec {
    pub origin: [f64; 3],
    pub length: f64,
    pub width: f64,
    pub slope: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StairsSpec {
    pub origin: [f64; 3],
    pub rise: f64,
    pub run: f64,
    pub count: usize,
    pub width: f64,
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub speed: f64,
    #[serde(default)]
    pub start_time: f64,
    pub waypoints: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotPath {
    pub waypoints: Vec<[f64; 2]>,
    pub speed: f64,
    /// Sensor height above `z = 0`.
    pub height: f64,
    pub period: f64,
    pub scans: usize,
    /// Fixed heading; the path direction when absent.
    #[serde(default)]
    pub yaw: Option<f64>,
}

impl Scene {
    pub fn new(bounds: Bounds) -> Self {
        Self {
            bounds,
            noise_sigma: default_noise(),
            plane: Vec::new(),
            boxes: Vec::new(),
            ramp: Vec::new(),
            stairs: Vec::new(),
            actor: Vec::new(),
            robot: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text).map_err(|e| Error::Scene(format!("{e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scene(format!("{e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(0..3).all(|i| b.min[i].is_finite() && b.max[i].is_finite() && b.min[i] < b.max[i]) {
            return Err(Error::Scene("bounds must be finite with min < max".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Scene("noise_sigma must be non-negative".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        for p in &self.plane {
            if !p.z.is_finite() || p.extent.is_some_and(|e| !finite(&e) || e[0] >= e[2] || e[1] >= e[3]) {
                return Err(Error::Scene(
                    "plane level and extent must be finite and non-empty".into(),
                ));
            }
        }
        for bx in &self.boxes {
            if !finite(&bx.center) || !positive(&bx.size) || !bx.yaw.is_finite() {
                return Err(Error::Scene("box needs a finite center and positive size".into()));
            }
        }
        for r in &self.ramp {
            if !finite(&r.origin) || !positive(&[r.length, r.width]) || !(r.slope > 0.0 && r.slope < 90.0) {
                return Err(Error::Scene(
                    "ramp needs positive length/width and a slope in (0, 90)".into(),
                ));
            }
        }
        for s in &self.stairs {
            if !finite(&s.origin) || !positive(&[s.rise, s.run, s.width]) || s.count == 0 {
                return Err(Error::Scene(
                    "stairs need positive rise/run/width and at least one step".into(),
                ));
            }
        }
        for a in &self.actor {
            if !positive(&a.size) || !(a.speed >= 0.0 && a.speed.is_finite()) || a.waypoints.is_empty() {
                return Err(Error::Scene(
                    "actor needs a positive size, speed ≥ 0 and waypoints".into(),
                ));
            }
            if let Some(w) = a.waypoints.iter().find(|w| !b.contains(**w)) {
                return Err(Error::Scene(format!("actor waypoint {w:?} lies outside the bounds")));
            }
        }
        if let Some(r) = &self.robot {
            if r.waypoints.is_empty() || !(r.speed >= 0.0) || !(r.period > 0.0) || !r.height.is_finite() {
                return Err(Error::Scene(
                    "robot path needs waypoints, speed ≥ 0 and period > 0".into(),
                ));
            }
            if let Some(w) = r.waypoints.iter().find(|w| !b.contains([w[0], w[1], r.height])) {
                return Err(Error::Scene(format!("robot waypoint {w:?} lies outside the bounds")));
            }
        }
        Ok(())
    }

    /// Static geometry as convex polytopes.
    pub fn static_polytopes(&self) -> Vec<Polytope> {
        let b = &self.bounds;
        let mut out = Vec::new();
        for p in &self.plane {
            let e = p.extent.unwrap_or([b.min[0], b.min[1], b.max[0], b.max[1]]);
            let depth = 1.0;
            out.push(Polytope::cuboid(
                Vector3::new((e[0] + e[2]) / 2.0, (e[1] + e[3]) / 2.0, p.z - depth / 2.0),
                Vector3::new(e[2] - e[0], e[3] - e[1], depth),
                0.0,
            ));
        }
        for bx in &self.boxes {
            out.push(Polytope::cuboid(
                Vector3::from(bx.center),
                Vector3::from(bx.size),
                bx.yaw.to_radians(),
            ));
        }
        for r in &self.ramp {
            out.push(Polytope::wedge(
                Vector3::from(r.origin),
                r.length,
                r.width,
                r.slope.to_radians(),
                r.yaw.to_radians(),
            ));
        }
        for s in &self.stairs {
            let yaw = s.yaw.to_radians();
            let (sin, cos) = yaw.sin_cos();
            for k in 0..s.count {
                let along = (k as f64 + 0.5) * s.run;
                let h = (k + 1) as f64 * s.rise;
                let c = Vector3::new(
                    s.origin[0] + cos * along,
                    s.origin[1] + sin * along,
                    s.origin[2] + h / 2.0,
                );
                out.push(Polytope::cuboid(c, Vector3::new(s.run, s.width, h), yaw));
            }
        }
        out
    }

    /// Actors at time `t`.
    pub fn actor_polytopes(&self, t: f64) -> Vec<Polytope> {
        self.actor
            .iter()
            .map(|a| {
                let c = a.position(t);
                Polytope::cuboid(Vector3::from(c), Vector3::from(a.size), a.yaw.to_radians())
            })
            .collect()
    }

    /// Scan times and sensor poses along the robot path.
    pub fn robot_poses(&self) -> Result<Vec<(f64, Pose)>> {
        let r = self
            .robot
            .as_ref()
            .ok_or_else(|| Error::Scene("scene has no robot path".into()))?;
        let pts: Vec<[f64; 3]> = r.waypoints.iter().map(|w| [w[0], w[1], r.height]).collect();
        Ok((0..r.scans)
            .map(|k| {
                let t = k as f64 * r.period;
                let (p, heading) = along_path(&pts, r.speed * t);
                let yaw = r.yaw.map_or(heading, f64::to_radians);
                (t, Pose::from_xyz_yaw(p[0], p[1], p[2], yaw))
            })
            .collect())
    }
}

impl ActorSpec {
    /// Box center at time `t`: parked at the first waypoint until
    /// `start_time`, then moving at `speed`, parked at the last one after.
    pub fn position(&self, t: f64) -> [f64; 3] {
        along_path(&self.waypoints, self.speed * (t - self.start_time).max(0.0)).0
    }
}

/// Point at arc length `s` along a polyline and the heading of its segment.
fn along_path(pts: &[[f64; 3]], s: f64) -> ([f64; 3], f64) {
    let mut left = s.max(0.0);
    let mut heading = 0.0;
    for w in pts.windows(2) {
        let d = [w[1][0] - w[0][0], w[1][1] - w[0][1], w[1][2] - w[0][2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if len == 0.0 {
            continue;
        }
        heading = d[1].atan2(d[0]);
        if left <= len {
            let f = left / len;
            return ([w[0][0] + f * d[0], w[0][1] + f * d[1], w[0][2] + f * d[2]], heading);
        }
        left -= len;
    }
    (*pts.last().expect("non-empty path"), heading)
}
