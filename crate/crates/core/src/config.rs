//! Pipeline configuration, presets and ablations.
//!
//! Configurations are TOML documents. An optional top-level `preset` key
//! selects the base values (`narrow`, `campus` or `kitti`); every other key
//! overrides the preset. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::completion::{CompletionParams, RiskNeighborhood, Weighting};
use crate::error::{Error, Result};
use crate::fusion::{FusionParams, DEFAULT_TILE_SIZE};
use crate::projection::{SensorIntrinsics, SurfelParams};

pub use crate::completion::InclinationNorm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub sensor: SensorIntrinsics,
    pub projection: ProjectionConfig,
    pub steppability: SteppabilityConfig,
    pub grid: GridConfig,
    pub reprojection: ReprojectionConfig,
    pub completion: CompletionConfig,
    pub fusion: FusionConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    /// Half-width of the normal-estimation window in pixels.
    pub normal_kernel: usize,
    pub min_support: usize,
    pub min_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteppabilityConfig {
    /// Half-width of the risk and pooling windows in pixels.
    pub kernel: usize,
    pub tau_r: f64,
    /// Use the printed proximity form instead of the complement form.
    pub literal_prox: bool,
    pub pooling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: f64,
    /// Side length of the square local window in meters.
    pub extent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReprojectionConfig {
    pub h_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionConfig {
    pub l: f64,
    pub tau_h: f64,
    pub weighting: Weighting,
    pub bound_by_observation: bool,
    pub risk_neighborhood: RiskNeighborhood,
    pub incl_norm: InclinationNorm,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub tau_m: f64,
    pub process_var: f64,
    pub var_init: f64,
    pub eps: f64,
    pub scale_h: f64,
    pub scale_o: f64,
    pub tile_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub decision_rule: DecisionRule,
    pub decision_tau: f64,
}

/// Which fused collision probability is compared against `decision_tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionRule {
    /// Posterior of the accumulated log-odds.
    #[default]
    Posterior,
    /// Logistic of the log-odds averaged over the cell's updates.
    MeanEvidence,
}

impl std::fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecisionRule::Posterior => "r_coll",
            DecisionRule::MeanEvidence => "r_coll_mean",
        })
    }
}

impl EvalConfig {
    pub fn posterior(decision_tau: f64) -> Self {
        Self {
            decision_rule: DecisionRule::Posterior,
            decision_tau,
        }
    }
}

/// Stage switches used for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Accept every measurement (`tau_m = ∞`).
    NoGate,
    /// Plain kernel weights for height inference.
    VanillaBgk,
    /// Skip conditional pooling of the risk image.
    NoPool,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-gate" => Ok(Ablation::NoGate),
            "vanilla-bgk" => Ok(Ablation::VanillaBgk),
            "no-pool" => Ok(Ablation::NoPool),
            other => Err(Error::Config(format!(
                "unknown ablation '{other}' (expected no-gate, vanilla-bgk or no-pool)"
            ))),
        }
    }
}

impl PipelineConfig {
    /// Confined courses: 6 m window at 0.1 m, `l = 0.5`.
    pub fn narrow() -> Self {
        Self {
            sensor: SensorIntrinsics::default_360x64(),
            projection: ProjectionConfig {
                normal_kernel: 1,
                min_support: 3,
                min_range: 0.3,
            },
            steppability: SteppabilityConfig {
                kernel: 1,
                tau_r: 0.6,
                literal_prox: false,
                pooling: true,
            },
            grid: GridConfig {
                resolution: 0.1,
                extent: 6.0,
            },
            reprojection: ReprojectionConfig { h_p: 1.0 },
            completion: CompletionConfig {
                l: 0.5,
                tau_h: 0.25,
                weighting: Weighting::Traversability,
                bound_by_observation: true,
                risk_neighborhood: RiskNeighborhood::Adjacent,
                incl_norm: InclinationNorm::TwoPi,
                sigma_min: 0.01,
            },
            fusion: FusionConfig {
                tau_m: 3.0,
                process_var: 1e-4,
                var_init: 0.04,
                eps: 0.01,
                scale_h: 1.0,
                scale_o: 1.0,
                tile_size: DEFAULT_TILE_SIZE,
            },
            eval: EvalConfig::posterior(0.5),
            seed: 0,
        }
    }

    /// Open campus scenes: 20 m window at 0.2 m, `l = 1.0`.
    pub fn campus() -> Self {
        let mut c = Self::narrow();
        c.grid = GridConfig {
            resolution: 0.2,
            extent: 20.0,
        };
        c.completion.l = 1.0;
        c
    }

    /// Driving-scale scenes: 80 m window at 0.2 m, `l = 1.0`.
    pub fn kitti() -> Self {
        let mut c = Self::campus();
        c.grid.extent = 80.0;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "narrow" => Ok(Self::narrow()),
            "campus" => Ok(Self::campus()),
            "kitti" => Ok(Self::kitti()),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected narrow, campus or kitti)"
            ))),
        }
    }

    /// Gate threshold for scenes with moving objects.
    pub fn dynamic(mut self) -> Self {
        self.fusion.tau_m = 1.0;
        self
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::NoGate => self.fusion.tau_m = f64::INFINITY,
            Ablation::VanillaBgk => self.completion.weighting = Weighting::Vanilla,
            Ablation::NoPool => self.steppability.pooling = false,
        }
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let base = match table.remove("preset") {
            None => Self::narrow(),
            Some(toml::Value::String(name)) => Self::preset(&name)?,
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let mut merged = toml::Value::try_from(&base).map_err(|e| Error::Config(format!("{e}")))?;
        merge(&mut merged, toml::Value::Table(table));
        let config: Self = merged.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        let unit = |name: &str, v: f64| check(name, v, (0.0..=1.0).contains(&v), "in [0, 1]");
        let pos = |name: &str, v: f64| check(name, v, v > 0.0 && v.is_finite(), "positive");
        if self.projection.min_support < 3 {
            return Err(Error::Config("projection.min_support must be at least 3".into()));
        }
        if self.projection.normal_kernel == 0 || self.steppability.kernel == 0 {
            return Err(Error::Config("pixel kernels must be at least 1".into()));
        }
        check(
            "projection.min_range",
            self.projection.min_range,
            self.projection.min_range >= 0.0 && self.projection.min_range.is_finite(),
            "non-negative",
        )?;
        unit("steppability.tau_r", self.steppability.tau_r)?;
        pos("grid.resolution", self.grid.resolution)?;
        pos("grid.extent", self.grid.extent)?;
        crate::geometry::GridSpec::centered([0.0, 0.0], self.grid.extent, self.grid.resolution)?;
        pos("reprojection.h_p", self.reprojection.h_p)?;
        pos("completion.l", self.completion.l)?;
        pos("completion.tau_h", self.completion.tau_h)?;
        check(
            "completion.sigma_min",
            self.completion.sigma_min,
            self.completion.sigma_min > 0.0 && self.completion.sigma_min <= 1.0,
            "in (0, 1]",
        )?;
        check(
            "fusion.tau_m",
            self.fusion.tau_m,
            self.fusion.tau_m > 0.0,
            "positive (inf disables the gate)",
        )?;
        check(
            "fusion.process_var",
            self.fusion.process_var,
            self.fusion.process_var >= 0.0 && self.fusion.process_var.is_finite(),
            "non-negative",
        )?;
        pos("fusion.var_init", self.fusion.var_init)?;
        check(
            "fusion.eps",
            self.fusion.eps,
            self.fusion.eps > 0.0 && self.fusion.eps < 0.5,
            "in (0, 0.5)",
        )?;
        pos("fusion.scale_h", self.fusion.scale_h)?;
        pos("fusion.scale_o", self.fusion.scale_o)?;
        if self.fusion.tile_size == 0 {
            return Err(Error::Config("fusion.tile_size must be positive".into()));
        }
        unit("eval.decision_tau", self.eval.decision_tau)?;
        Ok(())
    }

    pub fn surfel_params(&self) -> SurfelParams {
        SurfelParams {
            normal_kernel: self.projection.normal_kernel,
            min_support: self.projection.min_support,
            min_range: self.projection.min_range,
        }
    }

    pub fn completion_params(&self) -> CompletionParams {
        let c = &self.completion;
        CompletionParams {
            kernel_radius: c.l,
            tau_h: c.tau_h,
            weighting: c.weighting,
            bound_by_observation: c.bound_by_observation,
            risk_neighborhood: c.risk_neighborhood,
            incl_norm: c.incl_norm,
            sigma_min: c.sigma_min,
        }
    }

    pub fn fusion_params(&self) -> FusionParams {
        let f = &self.fusion;
        FusionParams {
            tau_m: f.tau_m,
            process_var: f.process_var,
            var_init: f.var_init,
            eps: f.eps,
            sigma_min: self.completion.sigma_min,
            scale_h: f.scale_h,
            scale_o: f.scale_o,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::narrow()
    }
}

fn check(name: &str, v: f64, ok: bool, expect: &str) -> Result<()> {
    if ok && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be {expect}, got {v}")))
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_table_values() {
        let n = PipelineConfig::narrow();
        assert_eq!((n.completion.l, n.grid.resolution, n.grid.extent), (0.5, 0.1, 6.0));
        assert_eq!(
            (n.steppability.tau_r, n.reprojection.h_p, n.completion.tau_h),
            (0.6, 1.0, 0.25)
        );
        assert_eq!(n.fusion.tau_m, 3.0);
        assert_eq!(n.clone().dynamic().fusion.tau_m, 1.0);
        let c = PipelineConfig::campus();
        assert_eq!((c.completion.l, c.grid.resolution, c.grid.extent), (1.0, 0.2, 20.0));
        assert_eq!(PipelineConfig::kitti().grid.extent, 80.0);
        for p in [n, c, PipelineConfig::kitti()] {
            p.validate().unwrap();
        }
    }

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let c = PipelineConfig::from_toml(
            "preset = \"campus\"\nseed = 7\n[fusion]\ntau_m = 1.0\n[completion]\nincl_norm = \"half_pi\"\n",
        )
        .unwrap();
        assert_eq!(c.grid.extent, 20.0);
        assert_eq!(c.fusion.tau_m, 1.0);
        assert_eq!(c.fusion.process_var, 1e-4);
        assert_eq!(c.completion.incl_norm, InclinationNorm::HalfPi);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("[fusion]\ntau_mm = 1.0\n").is_err());
        assert!(PipelineConfig::from_toml("colour = 1\n").is_err());
        assert!(PipelineConfig::from_toml("preset = \"wide\"\n").is_err());
    }

    #[test]
    fn illegal_values_are_rejected() {
        assert!(PipelineConfig::from_toml("[grid]\nresolution = -0.1\n").is_err());
        assert!(PipelineConfig::from_toml("[grid]\nextent = 6.05\n").is_err());
        assert!(PipelineConfig::from_toml("[fusion]\neps = 0.6\n").is_err());
        assert!(PipelineConfig::from_toml("[steppability]\ntau_r = 1.5\n").is_err());
        assert!(PipelineConfig::from_toml("[sensor]\nwidth = 1\n").is_err());
    }

    #[test]
    fn decision_rule_defaults_to_posterior() {
        assert_eq!(PipelineConfig::narrow().eval.decision_rule, DecisionRule::Posterior);
        let c = PipelineConfig::from_toml("[eval]\ndecision_rule = \"mean-evidence\"\ndecision_tau = 0.9\n").unwrap();
        assert_eq!(c.eval.decision_rule, DecisionRule::MeanEvidence);
        assert!(PipelineConfig::from_toml("[eval]\ndecision_rule = \"median\"\n").is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        for c in [
            PipelineConfig::narrow(),
            PipelineConfig::kitti().dynamic(),
            PipelineConfig::campus().with_ablation(Ablation::NoGate),
        ] {
            let text = c.to_toml().unwrap();
            assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
        }
    }

    #[test]
    fn ablations_touch_one_knob() {
        let base = PipelineConfig::narrow();
        let g = base.clone().with_ablation(Ablation::NoGate);
        assert_eq!(g.fusion.tau_m, f64::INFINITY);
        assert_eq!(
            PipelineConfig {
                fusion: base.fusion,
                ..g
            },
            base
        );
        let v = base.clone().with_ablation(Ablation::VanillaBgk);
        assert_eq!(v.completion.weighting, Weighting::Vanilla);
        assert!(!base.clone().with_ablation(Ablation::NoPool).steppability.pooling);
        assert_eq!("no-pool".parse::<Ablation>().unwrap(), Ablation::NoPool);
        assert!("fast".parse::<Ablation>().is_err());
    }
}
