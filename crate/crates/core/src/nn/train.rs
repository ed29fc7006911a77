use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{NetParams, Network};
use super::optim::{learning_rate_at, Adam};
use super::tensor::FieldTensor;
use crate::error::{Result, RomError};
use crate::par;

/// Which validation quantity drives early stopping and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    /// Mean squared reconstruction norm, the same form as the training loss.
    #[default]
    Loss,
    /// Mean relative reconstruction error `‖u − û‖ / ‖u‖`.
    RelativeError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub scheduler_step: usize,
    pub scheduler_decay: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub validation_metric: ValidationMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            scheduler_step: 50,
            scheduler_decay: 0.95,
            weight_decay: 1e-11,
            patience: 100,
            max_epochs: 5000,
            seed: 0,
            validation_metric: ValidationMetric::Loss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.batch_size > 0
            && self.scheduler_step > 0
            && self.scheduler_decay > 0.0
            && self.scheduler_decay <= 1.0
            && self.weight_decay >= 0.0
            && self.patience > 0
            && self.max_epochs > 0;
        if ok {
            Ok(())
        } else {
            Err(RomError::invalid(format!("invalid training configuration: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub metric: ValidationMetric,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored value has not beaten its best for `patience` epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            StopDecision::Improved
        } else if epoch - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum of squared reconstruction errors and summed gradients over the samples
/// `indices`, reduced left to right in index order.
fn batch_gradient(
    net: &Network,
    params: &NetParams,
    data: &FieldTensor,
    indices: &[usize],
) -> Result<(f64, NetParams)> {
    let per_sample = par::try_map_range(indices.len(), |k| {
        let x = data.sample(indices[k]);
        let trace = net.forward_trace(params, x)?;
        let y = trace.output();
        let upstream: Vec<f64> = y.iter().zip(x).map(|(yi, xi)| 2.0 * (yi - xi)).collect();
        let (_, grads) = net.backward(params, &trace, &upstream)?;
        Ok::<_, RomError>((squared_distance(y, x), grads))
    })?;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut total) = iter.next().expect("nonempty batch");
    for (l, g) in iter {
        loss += l;
        total.add_assign(&g);
    }
    Ok((loss, total))
}

/// Validation quantity for `metric` over every sample of `data`.
pub fn validation_value(
    net: &Network,
    params: &NetParams,
    data: &FieldTensor,
    metric: ValidationMetric,
) -> Result<f64> {
    let per_sample = par::try_map_range(data.batch, |i| {
        let x = data.sample(i);
        let y = net.forward(params, x)?;
        let sq = squared_distance(&y, x);
        Ok::<_, RomError>(match metric {
            ValidationMetric::Loss => Some(sq),
            ValidationMetric::RelativeError => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm > 0.0).then(|| sq.sqrt() / norm)
            }
        })
    })?;
    let values: Vec<f64> = per_sample.into_iter().flatten().collect();
    if values.is_empty() {
        return Err(RomError::invalid("validation set has no usable samples"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Trains `net` to reproduce its input with mini-batch Adam, returning the
/// parameters with the best validation value.
pub fn train_autoencoder(
    net: &Network,
    mut params: NetParams,
    train: &FieldTensor,
    validation: &FieldTensor,
    cfg: &TrainConfig,
) -> Result<(NetParams, TrainingLog)> {
    cfg.validate()?;
    net.check_params(&params)?;
    if net.input_shape().len() != net.output_shape().len() {
        return Err(RomError::shape(format!(
            "autoencoder output {} does not match input {}",
            net.output_shape(),
            net.input_shape()
        )));
    }
    for (name, set) in [("training", train), ("validation", validation)] {
        if set.batch == 0 {
            return Err(RomError::invalid(format!("{name} set is empty")));
        }
        if set.shape.len() != net.input_shape().len() {
            return Err(RomError::shape(format!(
                "{name} samples {} do not match network input {}",
                set.shape,
                net.input_shape()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params, cfg.weight_decay);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..train.batch).collect();
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let lr = learning_rate_at(cfg, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, mut grads) = batch_gradient(net, &params, train, chunk)?;
            if !loss.is_finite() {
                return Err(RomError::Diverged { epoch, loss });
            }
            epoch_loss += loss;
            grads.scale(1.0 / chunk.len() as f64);
            adam.step(&mut params, &grads, lr).map_err(|_| RomError::Diverged {
                epoch,
                loss: f64::NAN,
            })?;
        }
        let train_loss = epoch_loss / train.batch as f64;
        let value = validation_value(net, &params, validation, cfg.validation_metric)?;
        if !value.is_finite() {
            return Err(RomError::Diverged { epoch, loss: value });
        }
        records.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            validation: value,
        });
        if epoch % 100 == 0 {
            log::info!("epoch {epoch}: lr {lr:.3e} train {train_loss:.4e} validation {value:.4e}");
        }
        match stopper.update(epoch, value) {
            StopDecision::Improved => best_params.clone_from(&params),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_validation) = stopper.best();
    Ok((
        best_params,
        TrainingLog {
            seed: cfg.seed,
            metric: cfg.validation_metric,
            records,
            best_epoch,
            best_validation,
            stopped_early,
        },
    ))
}
