//! "ROMW" model checkpoint.
//!
//! ```text
//! "ROMW" | version u32
//! input shape (c, h, w): 3 × u64 | split u64 | layer count u64
//! per layer: kind, in, out, kernel, stride, padding, output_padding,
//!            activation, c, h, w                     (11 × u64)
//! per layer: weight count u64, weights f64… | bias count u64, biases f64…
//! ```
//!
//! `split` is the number of leading layers forming the encoder (0 when the
//! network is not an autoencoder).

use std::path::Path;

use super::layer::{Activation, LayerParams, LayerSpec, SpatialDims};
use super::network::{NetParams, Network};
use super::tensor::FieldShape;
use crate::error::{Result, RomError};
use crate::format::{FormatError, Reader, Writer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ROMW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub params: NetParams,
    pub split: usize,
}

const KIND_CONV1D: u64 = 0;
const KIND_CONV2D: u64 = 1;
const KIND_CONVT1D: u64 = 2;
const KIND_CONVT2D: u64 = 3;
const KIND_LINEAR: u64 = 4;
const KIND_FLATTEN: u64 = 5;
const KIND_UNFLATTEN: u64 = 6;

fn activation_code(a: Activation) -> u64 {
    match a {
        Activation::Identity => 0,
        Activation::Silu => 1,
    }
}

fn encode_layer(spec: &LayerSpec) -> [u64; 11] {
    let u = |v: usize| v as u64;
    match *spec {
        LayerSpec::Conv {
            dims,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            activation,
        } => [
            if dims == SpatialDims::One { KIND_CONV1D } else { KIND_CONV2D },
            u(in_channels),
            u(out_channels),
            u(kernel),
            u(stride),
            u(padding),
            0,
            activation_code(activation),
            0,
            0,
            0,
        ],
        LayerSpec::ConvTranspose {
            dims,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            output_padding,
            activation,
        } => [
            if dims == SpatialDims::One { KIND_CONVT1D } else { KIND_CONVT2D },
            u(in_channels),
            u(out_channels),
            u(kernel),
            u(stride),
            u(padding),
            u(output_padding),
            activation_code(activation),
            0,
            0,
            0,
        ],
        LayerSpec::Linear {
            in_features,
            out_features,
            activation,
        } => [
            KIND_LINEAR,
            u(in_features),
            u(out_features),
            0,
            0,
            0,
            0,
            activation_code(activation),
            0,
            0,
            0,
        ],
        LayerSpec::Flatten => [KIND_FLATTEN, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
        LayerSpec::Unflatten { shape } => [
            KIND_UNFLATTEN,
            0,
            0,
            0,
            0,
            0,
            0,
            0,
            u(shape.channels),
            u(shape.height),
            u(shape.width),
        ],
    }
}

fn decode_layer(f: [u64; 11]) -> std::result::Result<LayerSpec, FormatError> {
    let s = |v: u64| v as usize;
    let activation = match f[7] {
        0 => Activation::Identity,
        1 => Activation::Silu,
        other => return Err(FormatError::Corrupt(format!("unknown activation code {other}"))),
    };
    Ok(match f[0] {
        KIND_CONV1D | KIND_CONV2D => LayerSpec::Conv {
            dims: if f[0] == KIND_CONV1D { SpatialDims::One } else { SpatialDims::Two },
            in_channels: s(f[1]),
            out_channels: s(f[2]),
            kernel: s(f[3]),
            stride: s(f[4]),
            padding: s(f[5]),
            activation,
        },
        KIND_CONVT1D | KIND_CONVT2D => LayerSpec::ConvTranspose {
            dims: if f[0] == KIND_CONVT1D { SpatialDims::One } else { SpatialDims::Two },
            in_channels: s(f[1]),
            out_channels: s(f[2]),
            kernel: s(f[3]),
            stride: s(f[4]),
            padding: s(f[5]),
            output_padding: s(f[6]),
            activation,
        },
        KIND_LINEAR => LayerSpec::Linear {
            in_features: s(f[1]),
            out_features: s(f[2]),
            activation,
        },
        KIND_FLATTEN => LayerSpec::Flatten,
        KIND_UNFLATTEN => LayerSpec::Unflatten {
            shape: FieldShape::new(s(f[8]), s(f[9]), s(f[10])),
        },
        other => return Err(FormatError::Corrupt(format!("unknown layer kind {other}"))),
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        let input = self.network.input_shape();
        w.usize(input.channels);
        w.usize(input.height);
        w.usize(input.width);
        w.usize(self.split);
        w.usize(self.network.layers().len());
        for layer in self.network.layers() {
            for v in encode_layer(layer) {
                w.u64(v);
            }
        }
        for p in &self.params.layers {
            w.f64_array(&p.weight);
            w.f64_array(&p.bias);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let input = FieldShape::new(
            r.count("input channels")?,
            r.count("input height")?,
            r.count("input width")?,
        );
        let split = r.count("encoder split")?;
        let n_layers = r.count("layer count")?;
        r.require(n_layers.saturating_mul(88), "layer table")?;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let mut f = [0u64; 11];
            for v in f.iter_mut() {
                *v = r.u64("layer table")?;
            }
            layers.push(decode_layer(f)?);
        }
        let mut params = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let weight = r.f64_array(&format!("layer {i} weights"))?;
            let bias = r.f64_array(&format!("layer {i} biases"))?;
            params.push(LayerParams { weight, bias });
        }
        r.finish()?;
        if split > n_layers {
            return Err(FormatError::Corrupt(format!("split {split} exceeds {n_layers} layers")).into());
        }
        let network = Network::new(input, layers)?;
        let params = NetParams { layers: params };
        network.check_params(&params)?;
        Ok(Checkpoint {
            network,
            params,
            split,
        })
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(RomError::from)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    Checkpoint::from_bytes(&bytes)
}
