//! Dimensionality reduction: a linear POD reducer and a convolutional
//! autoencoder behind the same encode/decode contract.

mod cae;
mod grid;
mod pod;

use std::path::Path;

pub use cae::{cae_build, intermediate_width, train_cae, CaeArch, CaeModel};
pub use grid::{grid_search, GridPoint, GridPointReport, GridSearchResult, GridSearchSpace};
pub use pod::{pod_fit, PodModel, PodRank, POD_MAGIC, POD_VERSION};

use crate::error::{Result, RomError};
use crate::nn::{read_checkpoint, FieldShape, FieldTensor};
use crate::par;

/// Maps full-order fields to latent vectors and back.
pub trait Reducer: Sync {
    fn n_latent(&self) -> usize;
    fn field_shape(&self) -> FieldShape;
    fn encode(&self, u: &[f64]) -> Result<Vec<f64>>;
    fn decode(&self, q: &[f64]) -> Result<Vec<f64>>;

    /// Encodes every sample of `x`, preserving order.
    fn encode_batch(&self, x: &FieldTensor) -> Result<Vec<Vec<f64>>> {
        par::try_map_range(x.batch, |i| self.encode(x.sample(i)))
    }

    fn decode_batch(&self, qs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        par::try_map_range(qs.len(), |i| self.decode(&qs[i]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReducerModel {
    Pod(PodModel),
    Cae(CaeModel),
}

impl ReducerModel {
    pub fn kind(&self) -> &'static str {
        match self {
            ReducerModel::Pod(_) => "pod",
            ReducerModel::Cae(_) => "cae",
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            ReducerModel::Pod(m) => m.save(path),
            ReducerModel::Cae(m) => m.save(path),
        }
    }

    /// Loads either reducer file, dispatching on its magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        match bytes.get(..4) {
            Some(m) if m == POD_MAGIC => Ok(ReducerModel::Pod(PodModel::from_bytes(&bytes)?)),
            Some(b"ROMW") => Ok(ReducerModel::Cae(CaeModel::from_checkpoint(read_checkpoint(path)?)?)),
            _ => Err(RomError::invalid(format!(
                "{} is neither a POD nor a CAE reducer file",
                path.display()
            ))),
        }
    }
}

impl Reducer for ReducerModel {
    fn n_latent(&self) -> usize {
        match self {
            ReducerModel::Pod(m) => m.n_latent(),
            ReducerModel::Cae(m) => m.n_latent(),
        }
    }

    fn field_shape(&self) -> FieldShape {
        match self {
            ReducerModel::Pod(m) => m.field_shape(),
            ReducerModel::Cae(m) => m.field_shape(),
        }
    }

    fn encode(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            ReducerModel::Pod(m) => m.encode(u),
            ReducerModel::Cae(m) => m.encode(u),
        }
    }

    fn decode(&self, q: &[f64]) -> Result<Vec<f64>> {
        match self {
            ReducerModel::Pod(m) => m.decode(q),
            ReducerModel::Cae(m) => m.decode(q),
        }
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(RomError::shape(format!("{what} needs {expected} values, got {got}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    Pod,
    #[default]
    Cae,
}

/// Reducer choice and architecture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ReducerConfig {
    pub kind: ReducerKind,
    pub n_latent: usize,
    pub conv_layers: usize,
    pub channels: usize,
    pub linear_width: Option<usize>,
    pub latent_activation: bool,
    /// POD only: energy threshold; the rank is `n_latent` when absent.
    pub pod_epsilon: Option<f64>,
}

impl Default for ReducerConfig {
    fn default() -> Self {
        ReducerConfig::from_arch(ReducerKind::Cae, &CaeArch::burgers(2))
    }
}

impl ReducerConfig {
    pub fn from_arch(kind: ReducerKind, arch: &CaeArch) -> Self {
        ReducerConfig {
            kind,
            n_latent: arch.n_latent,
            conv_layers: arch.conv_layers,
            channels: arch.channels,
            linear_width: arch.linear_width,
            latent_activation: arch.latent_activation,
            pod_epsilon: None,
        }
    }

    pub fn arch(&self) -> CaeArch {
        CaeArch {
            conv_layers: self.conv_layers,
            channels: self.channels,
            n_latent: self.n_latent,
            linear_width: self.linear_width,
            latent_activation: self.latent_activation,
            ..CaeArch::default()
        }
    }

    pub fn pod_rank(&self) -> PodRank {
        match self.pod_epsilon {
            Some(eps) => PodRank::Energy(eps),
            None => PodRank::Fixed(self.n_latent),
        }
    }
}

/// Fits POD or trains a CAE according to `cfg`.
pub fn fit_reducer(
    cfg: &ReducerConfig,
    train: &crate::data::SnapshotSet,
    validation: &crate::data::SnapshotSet,
    training: &crate::nn::TrainConfig,
) -> Result<(ReducerModel, Option<crate::nn::TrainingLog>)> {
    match cfg.kind {
        ReducerKind::Pod => Ok((ReducerModel::Pod(pod_fit(train, cfg.pod_rank())?), None)),
        ReducerKind::Cae => {
            let (model, log) = train_cae(&cfg.arch(), train, validation, training)?;
            Ok((ReducerModel::Cae(model), Some(log)))
        }
    }
}
