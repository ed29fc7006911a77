use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_len, Reducer};
use crate::data::SnapshotSet;
use crate::error::{Result, RomError};
use crate::nn::{
    train_autoencoder, write_checkpoint, Activation, Checkpoint, FieldShape, LayerSpec, NetParams, Network,
    SpatialDims, TrainConfig, TrainingLog,
};

/// Architecture of a convolutional autoencoder: `conv_layers` stride-2
/// convolutions, flatten, two linear layers down to `n_latent`, and the
/// mirror image for the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaeArch {
    pub conv_layers: usize,
    pub channels: usize,
    pub n_latent: usize,
    /// Width of the intermediate linear layer; derived when absent.
    pub linear_width: Option<usize>,
    /// Apply SiLU to the latent output of the encoder.
    pub latent_activation: bool,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for CaeArch {
    fn default() -> Self {
        CaeArch::burgers(2)
    }
}

impl CaeArch {
    pub fn burgers(n_latent: usize) -> Self {
        CaeArch {
            conv_layers: 6,
            channels: 32,
            n_latent,
            linear_width: None,
            latent_activation: true,
            kernel: 5,
            stride: 2,
            padding: 2,
        }
    }

    /// Four 16-channel conv layers, the 2D pattern.
    pub fn planar(n_latent: usize) -> Self {
        CaeArch {
            conv_layers: 4,
            channels: 16,
            ..CaeArch::burgers(n_latent)
        }
    }
}

/// `⌊√(flat · n_latent)⌋`: 11 for 64→2, 71 for 512→10, 90 for 1024→8.
pub fn intermediate_width(flat: usize, n_latent: usize) -> usize {
    ((flat * n_latent) as f64).sqrt().floor().max(1.0) as usize
}

/// Builds the autoencoder layer stack for fields of `shape`. Returns the
/// network and the number of encoder layers.
pub fn cae_build(shape: FieldShape, arch: &CaeArch) -> Result<(Network, usize)> {
    if arch.conv_layers == 0 || arch.channels == 0 || arch.n_latent == 0 || shape.is_empty() {
        return Err(RomError::invalid(format!("degenerate architecture {arch:?} for {shape}")));
    }
    if arch.stride != 2 || arch.kernel != 2 * arch.padding + 1 {
        return Err(RomError::invalid("only halving convolutions (k = 2p + 1, s = 2) are supported"));
    }
    let dims = if shape.height == 1 { SpatialDims::One } else { SpatialDims::Two };
    let factor = 1usize
        .checked_shl(arch.conv_layers as u32)
        .ok_or_else(|| RomError::invalid("too many conv layers"))?;
    let divisible = |n: usize| n % factor == 0 && n >= factor;
    if !divisible(shape.width) || (dims == SpatialDims::Two && !divisible(shape.height)) {
        return Err(RomError::invalid(format!(
            "spatial size of {shape} is not divisible by 2^{}",
            arch.conv_layers
        )));
    }
    let bottom = FieldShape::new(
        arch.channels,
        if dims == SpatialDims::One { 1 } else { shape.height / factor },
        shape.width / factor,
    );
    let flat = bottom.len();
    let width = arch.linear_width.unwrap_or_else(|| intermediate_width(flat, arch.n_latent));
    let silu = Activation::Silu;
    let latent_act = if arch.latent_activation { silu } else { Activation::Identity };

    let mut layers = Vec::new();
    for i in 0..arch.conv_layers {
        layers.push(LayerSpec::Conv {
            dims,
            in_channels: if i == 0 { shape.channels } else { arch.channels },
            out_channels: arch.channels,
            kernel: arch.kernel,
            stride: arch.stride,
            padding: arch.padding,
            activation: silu,
        });
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Linear {
        in_features: flat,
        out_features: width,
        activation: silu,
    });
    layers.push(LayerSpec::Linear {
        in_features: width,
        out_features: arch.n_latent,
        activation: latent_act,
    });
    let split = layers.len();
    layers.push(LayerSpec::Linear {
        in_features: arch.n_latent,
        out_features: width,
        activation: silu,
    });
    layers.push(LayerSpec::Linear {
        in_features: width,
        out_features: flat,
        activation: silu,
    });
    layers.push(LayerSpec::Unflatten { shape: bottom });
    for i in 0..arch.conv_layers {
        layers.push(LayerSpec::ConvTranspose {
            dims,
            in_channels: arch.channels,
            out_channels: if i + 1 == arch.conv_layers { shape.channels } else { arch.channels },
            kernel: arch.kernel,
            stride: arch.stride,
            padding: arch.padding,
            output_padding: 1,
            activation: silu,
        });
    }
    let net = Network::new(shape, layers)?;
    if net.output_shape() != shape {
        return Err(RomError::shape(format!("decoder produces {}, expected {shape}", net.output_shape())));
    }
    Ok((net, split))
}

/// A trained (or freshly initialized) autoencoder. The reference field is
/// zero; offsets are absorbed by the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub network: Network,
    pub params: NetParams,
    pub split: usize,
}

impl CaeModel {
    pub fn new(shape: FieldShape, arch: &CaeArch, seed: u64) -> Result<Self> {
        let (network, split) = cae_build(shape, arch)?;
        let params = network.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(CaeModel {
            network,
            params,
            split,
        })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.split == 0 || c.split >= c.network.layers().len() {
            return Err(RomError::invalid("checkpoint is not an autoencoder (no encoder/decoder split)"));
        }
        if c.network.input_shape().len() != c.network.output_shape().len() {
            return Err(RomError::shape("checkpoint decoder output does not match its input"));
        }
        Ok(CaeModel {
            network: c.network,
            params: c.params,
            split: c.split,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            network: self.network.clone(),
            params: self.params.clone(),
            split: self.split,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, &self.to_checkpoint())
    }
}

impl Reducer for CaeModel {
    fn n_latent(&self) -> usize {
        self.network.shape_at(self.split).len()
    }

    fn field_shape(&self) -> FieldShape {
        self.network.input_shape()
    }

    fn encode(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("CAE encode input", self.field_shape().len(), u.len())?;
        self.network.forward_range(&self.params, 0..self.split, u)
    }

    fn decode(&self, q: &[f64]) -> Result<Vec<f64>> {
        check_len("CAE decode input", self.n_latent(), q.len())?;
        let out = self
            .network
            .forward_range(&self.params, self.split..self.network.layers().len(), q)?;
        Ok(out)
    }
}

/// Initializes an autoencoder from `cfg.seed` and trains it on `train`.
pub fn train_cae(
    arch: &CaeArch,
    train: &SnapshotSet,
    validation: &SnapshotSet,
    cfg: &TrainConfig,
) -> Result<(CaeModel, TrainingLog)> {
    if train.shape != validation.shape {
        return Err(RomError::shape("training and validation fields differ in shape"));
    }
    let model = CaeModel::new(train.shape, arch, cfg.seed)?;
    let (params, log) = train_autoencoder(
        &model.network,
        model.params,
        &train.to_tensor(),
        &validation.to_tensor(),
        cfg,
    )?;
    Ok((
        CaeModel {
            network: model.network,
            params,
            split: model.split,
        },
        log,
    ))
}
