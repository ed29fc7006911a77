//! JSON run configuration. Every field has a default, so a partial file is
//! completed from [`RomConfig::default`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetKind, DatasetSpec};
use crate::error::{Result, RomError};
use crate::nn::{FieldShape, TrainConfig};
use crate::reduction::{CaeArch, GridSearchSpace, ReducerConfig, ReducerKind};
use crate::rom::{HodmdConfig, InterpolatorKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Directory holding `train.roms`, `validation.roms` and `test.roms`.
    pub data_dir: PathBuf,
    pub reducer: PathBuf,
    pub training_log: PathBuf,
    pub bundle: PathBuf,
    pub report: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            data_dir: "data".into(),
            reducer: "reducer.bin".into(),
            training_log: "training_log.json".into(),
            bundle: "rom".into(),
            report: "report.csv".into(),
        }
    }
}

impl PathsConfig {
    pub fn split(&self, name: &str) -> PathBuf {
        self.data_dir.join(format!("{name}.roms"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RomConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub reducer: ReducerConfig,
    pub training: TrainConfig,
    pub grid: GridSearchSpace,
    pub hodmd: HodmdConfig,
    pub interpolator: InterpolatorKind,
    /// Delay counts evaluated by `evaluate`.
    pub delay_sweep: Vec<usize>,
    pub paths: PathsConfig,
}

impl Default for RomConfig {
    fn default() -> Self {
        RomConfig {
            seed: 0,
            dataset: DatasetSpec::burgers(),
            reducer: ReducerConfig::default(),
            training: TrainConfig::default(),
            grid: GridSearchSpace::default(),
            hodmd: HodmdConfig::default(),
            interpolator: InterpolatorKind::Auto,
            delay_sweep: vec![2, 4, 6, 8],
            paths: PathsConfig::default(),
        }
    }
}

impl RomConfig {
    /// A small 2D configuration: synthetic fields of `2 × 32 × 32` and a
    /// three-layer, 16-channel autoencoder.
    pub fn synthetic2d() -> Self {
        let arch = CaeArch {
            conv_layers: 3,
            ..CaeArch::planar(4)
        };
        RomConfig {
            dataset: DatasetSpec::synthetic2d(FieldShape::new(2, 32, 32)),
            reducer: ReducerConfig::from_arch(ReducerKind::Cae, &arch),
            training: TrainConfig {
                max_epochs: 200,
                ..TrainConfig::default()
            },
            grid: GridSearchSpace {
                conv_layers: vec![3],
                latent_dims: vec![4],
                ..GridSearchSpace::default()
            },
            hodmd: HodmdConfig {
                n_delay: 4,
                ..HodmdConfig::default()
            },
            ..RomConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RomConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Sets the master seed and every seed derived from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.dataset.seed = seed;
        self.training.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.training.validate()?;
        if self.reducer.n_latent == 0 {
            return Err(RomError::invalid("n_latent must be at least 1"));
        }
        if let Some(eps) = self.reducer.pod_epsilon {
            if !(0.0..1.0).contains(&eps) {
                return Err(RomError::invalid("pod_epsilon must lie in [0, 1)"));
            }
        }
        if self.hodmd.n_delay == 0 || !(0.0..1.0).contains(&self.hodmd.epsilon) {
            return Err(RomError::invalid("hodmd needs n_delay ≥ 1 and epsilon in [0, 1)"));
        }
        if self.delay_sweep.contains(&0) {
            return Err(RomError::invalid("delay_sweep entries must be at least 1"));
        }
        let g = &self.grid;
        if g.weight_decays.is_empty() || g.conv_layers.is_empty() || g.latent_dims.is_empty() {
            return Err(RomError::invalid("grid search sets must be nonempty"));
        }
        if self.reducer.kind == ReducerKind::Cae && self.dataset.kind == DatasetKind::Burgers1d && self.reducer.conv_layers > 7 {
            return Err(RomError::invalid("too many conv layers for the Burgers grid"));
        }
        Ok(())
    }
}
