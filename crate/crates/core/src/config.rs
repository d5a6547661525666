//! Run configuration, read from TOML. Every field has a default, so an empty
//! file is a valid configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kinematics::{CameraModel, Dimensions, SynthKind, ToolGeometry};
use crate::priors::LossWeights;
use crate::routing::{CapacitySchedule, RouterConfig};
use crate::scheduler::{BudgetConfig, CostModel, SignificanceWeights};
use crate::{Error, Result};

/// Image size as `HxW`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("resolution must look like 64x64, got `{s}`"));
        let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let height = h.trim().parse().map_err(|_| bad())?;
        let width = w.trim().parse().map_err(|_| bad())?;
        if height == 0 || width == 0 {
            return Err(bad());
        }
        Ok(Self { height, width })
    }
}

impl TryFrom<String> for Resolution {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Resolution> for String {
    fn from(r: Resolution) -> String {
        r.to_string()
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub kinds: Vec<SynthKind>,
    pub frames: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            kinds: SynthKind::ALL.to_vec(),
            frames: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateInit {
    /// Gaussian weights everywhere.
    Random,
    /// Gaussian weights with the hand-set motion prior on the inner gates.
    KinematicPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterSection {
    #[serde(flatten)]
    pub dims: RouterConfig,
    pub capacity: CapacitySchedule,
    /// Training progress used for the capacity blend.
    pub progress: f64,
    /// Diffusion time fed to the timestep embedding.
    pub diffusion_time: f64,
    pub init: GateInit,
    /// Number of motion-magnitude quantile bins in the routing statistics.
    pub motion_bins: usize,
}

impl Default for RouterSection {
    fn default() -> Self {
        Self {
            dims: RouterConfig::default(),
            capacity: CapacitySchedule::default(),
            progress: 1.0,
            diffusion_time: 0.5,
            init: GateInit::KinematicPrior,
            motion_bins: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSection {
    #[serde(flatten)]
    pub weights: LossWeights,
    pub ema_beta: f64,
    pub gradcheck_eps: f64,
    pub gradcheck_tol: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            ema_beta: 0.95,
            gradcheck_eps: 1e-5,
            gradcheck_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSection {
    #[serde(flatten)]
    pub budget: BudgetConfig,
    pub significance: SignificanceWeights,
    pub cost: CostModel,
    pub distill_lambda_r: f64,
    pub distill_lambda_c: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            budget: BudgetConfig::default(),
            significance: SignificanceWeights::default(),
            cost: CostModel::default(),
            distill_lambda_r: 1.0,
            distill_lambda_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub tube_half_width: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            tube_half_width: crate::metrics::DEFAULT_TUBE_HALF_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub resolution: Resolution,
    pub tool: Dimensions,
    pub synth: SynthSection,
    pub router: RouterSection,
    pub losses: LossSection,
    pub schedule: ScheduleSection,
    pub metrics: MetricsSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            resolution: Resolution { height: 64, width: 64 },
            tool: Dimensions::default(),
            synth: SynthSection::default(),
            router: RouterSection::default(),
            losses: LossSection::default(),
            schedule: ScheduleSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::io::io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.router.dims.validate()?;
        self.router.capacity.validate()?;
        let stride = self.router.dims.stride;
        if self.resolution.height % stride != 0 || self.resolution.width % stride != 0 {
            return Err(Error::Config(format!(
                "resolution {} is not divisible by stride {stride}",
                self.resolution
            )));
        }
        if !(0.0..=1.0).contains(&self.router.progress) || !(0.0..=1.0).contains(&self.router.diffusion_time) {
            return Err(Error::Config(
                "router progress and diffusion_time must lie in [0, 1]".into(),
            ));
        }
        if self.router.motion_bins < 2 {
            return Err(Error::Config("need at least two motion bins".into()));
        }
        if self.synth.frames == 0 || self.synth.kinds.is_empty() {
            return Err(Error::Config("synth needs at least one kind and one frame".into()));
        }
        self.losses.weights.validate()?;
        if !(self.losses.ema_beta > 0.0 && self.losses.ema_beta < 1.0) {
            return Err(Error::Config("ema_beta must lie in (0, 1)".into()));
        }
        self.schedule.budget.validate()?;
        self.schedule.significance.validate()?;
        if !(self.metrics.tube_half_width > 0.0) {
            return Err(Error::Config("tube_half_width must be positive".into()));
        }
        self.geometry().validate()?;
        Ok(())
    }

    pub fn geometry(&self) -> ToolGeometry {
        ToolGeometry::with_dimensions(self.tool)
    }

    /// Camera with focal length equal to the image width, principal point at
    /// the image centre and identity extrinsic.
    pub fn camera(&self) -> CameraModel {
        let Resolution { height, width } = self.resolution;
        let f = width as f64;
        CameraModel::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }
}
