use serde::{Deserialize, Serialize};

use super::cae::{train_cae, CaeArch, CaeModel};
use crate::data::SnapshotSet;
use crate::error::{Result, RomError};
use crate::nn::{validation_value, TrainConfig, TrainingLog, ValidationMetric};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearchSpace {
    pub weight_decays: Vec<f64>,
    pub conv_layers: Vec<usize>,
    pub latent_dims: Vec<usize>,
}

impl Default for GridSearchSpace {
    fn default() -> Self {
        GridSearchSpace {
            weight_decays: vec![1e-8, 1e-9, 1e-10, 1e-11],
            conv_layers: vec![4, 5, 6],
            latent_dims: vec![2, 4, 6, 8, 10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub weight_decay: f64,
    pub conv_layers: usize,
    pub n_latent: usize,
}

impl GridSearchSpace {
    /// Every point, weight decay outermost and latent dimension innermost.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &weight_decay in &self.weight_decays {
            for &conv_layers in &self.conv_layers {
                for &n_latent in &self.latent_dims {
                    out.push(GridPoint {
                        index: out.len(),
                        weight_decay,
                        conv_layers,
                        n_latent,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointReport {
    pub point: GridPoint,
    pub seed: u64,
    /// Mean relative reconstruction error on the validation set.
    pub validation_error: Option<f64>,
    pub epochs: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub best: CaeModel,
    pub best_log: TrainingLog,
    pub report: Vec<GridPointReport>,
}

/// Trains one autoencoder per grid point (seed `cfg.seed + index`) and keeps
/// the one with the smallest mean relative validation error. Ties go to the
/// earlier point; failed points are reported and skipped.
pub fn grid_search(
    space: &GridSearchSpace,
    base: &CaeArch,
    train: &SnapshotSet,
    validation: &SnapshotSet,
    cfg: &TrainConfig,
) -> Result<GridSearchResult> {
    let points = space.points();
    if points.is_empty() {
        return Err(RomError::invalid("grid search space is empty"));
    }
    let validation_tensor = validation.to_tensor();
    let outcomes = par::map_slice(&points, |p| {
        let arch = CaeArch {
            conv_layers: p.conv_layers,
            n_latent: p.n_latent,
            ..base.clone()
        };
        let point_cfg = TrainConfig {
            weight_decay: p.weight_decay,
            seed: cfg.seed.wrapping_add(p.index as u64),
            ..cfg.clone()
        };
        let trained = train_cae(&arch, train, validation, &point_cfg).and_then(|(model, log)| {
            let err = validation_value(
                &model.network,
                &model.params,
                &validation_tensor,
                ValidationMetric::RelativeError,
            )?;
            Ok((model, log, err))
        });
        (point_cfg.seed, trained)
    });

    let mut report = Vec::with_capacity(points.len());
    let mut best: Option<(usize, CaeModel, TrainingLog, f64)> = None;
    for (p, (seed, outcome)) in points.iter().zip(outcomes) {
        match outcome {
            Ok((model, log, err)) => {
                log::info!("grid point {} ({p:?}): validation error {err:.4e}", p.index);
                report.push(GridPointReport {
                    point: *p,
                    seed,
                    validation_error: Some(err),
                    epochs: log.records.len(),
                    failure: None,
                });
                if best.as_ref().is_none_or(|b| err < b.3) {
                    best = Some((p.index, model, log, err));
                }
            }
            Err(e) => {
                log::warn!("grid point {} ({p:?}) failed: {e}", p.index);
                report.push(GridPointReport {
                    point: *p,
                    seed,
                    validation_error: None,
                    epochs: 0,
                    failure: Some(e.to_string()),
                });
            }
        }
    }
    let (best_index, best, best_log, _) =
        best.ok_or_else(|| RomError::invalid("every grid point failed to train"))?;
    Ok(GridSearchResult {
        best_index,
        best,
        best_log,
        report,
    })
}
