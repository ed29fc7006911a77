use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::tensor::FieldShape;
use crate::error::{Result, RomError};

/// `x · sigmoid(x)`, evaluated without overflowing `exp` for large `|x|`.
pub fn silu(x: f64) -> f64 {
    if x >= 0.0 {
        x / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        x * e / (1.0 + e)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Silu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu(x),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu_derivative(x),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialDims {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        dims: SpatialDims,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        activation: Activation,
    },
    ConvTranspose {
        dims: SpatialDims,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        activation: Activation,
    },
    Linear {
        in_features: usize,
        out_features: usize,
        activation: Activation,
    },
    Flatten,
    Unflatten {
        shape: FieldShape,
    },
}

/// Weights and biases of one layer. Conv weights are `(out, in, kh, kw)`,
/// transposed-conv weights `(in, out, kh, kw)`, linear weights `(out, in)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(weight: usize, bias: usize) -> Self {
        LayerParams {
            weight: vec![0.0; weight],
            bias: vec![0.0; bias],
        }
    }
}

/// Geometry of a strided convolution mapping `(c, h, w)` to `(oh, ow)` positions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// `cols[(c, ky, kx), (oy, ox)] = x[c, oy·sh - ph + ky, ox·sw - pw + kx]`, zero outside.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.oh {
                        let iy = (oy * self.sh + ky) as isize - self.ph as isize;
                        let dst = &mut cols[row + oy * self.ow..row + (oy + 1) * self.ow];
                        if iy < 0 || iy as usize >= self.h {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &x[(c * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.sw + kx) as isize - self.pw as isize;
                            *d = if ix >= 0 && (ix as usize) < self.w {
                                src[ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters columns back, accumulating into `x`.
    fn col2im(&self, cols: &[f64], x: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.oh {
                        let iy = (oy * self.sh + ky) as isize - self.ph as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        let src = &cols[row + oy * self.ow..row + (oy + 1) * self.ow];
                        let dst = &mut x[(c * self.h + iy as usize) * self.w..][..self.w];
                        for (ox, s) in src.iter().enumerate() {
                            let ix = (ox * self.sw + kx) as isize - self.pw as isize;
                            if ix >= 0 && (ix as usize) < self.w {
                                dst[ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_out_len(n: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = n + 2 * padding;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

fn conv_transpose_out_len(
    n: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    if n == 0 || stride == 0 || output_padding >= stride {
        return None;
    }
    ((n - 1) * stride + kernel + output_padding).checked_sub(2 * padding)
}

impl LayerSpec {
    pub fn activation(&self) -> Activation {
        match *self {
            LayerSpec::Conv { activation, .. }
            | LayerSpec::ConvTranspose { activation, .. }
            | LayerSpec::Linear { activation, .. } => activation,
            LayerSpec::Flatten | LayerSpec::Unflatten { .. } => Activation::Identity,
        }
    }

    pub fn has_params(&self) -> bool {
        !matches!(self, LayerSpec::Flatten | LayerSpec::Unflatten { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv {
                dims: SpatialDims::One,
                ..
            } => "Conv1d",
            LayerSpec::Conv { .. } => "Conv2d",
            LayerSpec::ConvTranspose {
                dims: SpatialDims::One,
                ..
            } => "ConvTranspose1d",
            LayerSpec::ConvTranspose { .. } => "ConvTranspose2d",
            LayerSpec::Linear { .. } => "Linear",
            LayerSpec::Flatten => "Flatten",
            LayerSpec::Unflatten { .. } => "Unflatten",
        }
    }

    /// `(kh, kw, sh, sw, ph, pw)`; 1D layers act along the width only.
    fn kernel_geometry(dims: SpatialDims, kernel: usize, stride: usize, padding: usize) -> [usize; 6] {
        match dims {
            SpatialDims::One => [1, kernel, 1, stride, 0, padding],
            SpatialDims::Two => [kernel, kernel, stride, stride, padding, padding],
        }
    }

    pub fn output_shape(&self, input: FieldShape) -> Result<FieldShape> {
        let mismatch = |what: &str| {
            RomError::shape(format!("{} layer: {what} (input {input})", self.name()))
        };
        match *self {
            LayerSpec::Conv {
                dims,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                if input.channels != in_channels {
                    return Err(mismatch(&format!("expected {in_channels} channels")));
                }
                if dims == SpatialDims::One && input.height != 1 {
                    return Err(mismatch("1D convolution needs height 1"));
                }
                let [kh, kw, sh, sw, ph, pw] = Self::kernel_geometry(dims, kernel, stride, padding);
                let oh = conv_out_len(input.height, kh, sh, ph)
                    .ok_or_else(|| mismatch("spatial size smaller than kernel"))?;
                let ow = conv_out_len(input.width, kw, sw, pw)
                    .ok_or_else(|| mismatch("spatial size smaller than kernel"))?;
                Ok(FieldShape::new(out_channels, oh, ow))
            }
            LayerSpec::ConvTranspose {
                dims,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                output_padding,
                ..
            } => {
                if input.channels != in_channels {
                    return Err(mismatch(&format!("expected {in_channels} channels")));
                }
                if dims == SpatialDims::One && input.height != 1 {
                    return Err(mismatch("1D convolution needs height 1"));
                }
                let [kh, kw, sh, sw, ph, pw] = Self::kernel_geometry(dims, kernel, stride, padding);
                let oph = if dims == SpatialDims::One { 0 } else { output_padding };
                let oh = conv_transpose_out_len(input.height, kh, sh, ph, oph)
                    .ok_or_else(|| mismatch("invalid transposed geometry"))?;
                let ow = conv_transpose_out_len(input.width, kw, sw, pw, output_padding)
                    .ok_or_else(|| mismatch("invalid transposed geometry"))?;
                Ok(FieldShape::new(out_channels, oh, ow))
            }
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => {
                if !input.is_flat() || input.channels != in_features {
                    return Err(mismatch(&format!("expected {in_features} flat features")));
                }
                Ok(FieldShape::flat(out_features))
            }
            LayerSpec::Flatten => Ok(FieldShape::flat(input.len())),
            LayerSpec::Unflatten { shape } => {
                if shape.len() != input.len() {
                    return Err(mismatch(&format!("cannot unflatten into {shape}")));
                }
                Ok(shape)
            }
        }
    }

    /// `(weight count, bias count, fan_in)`; fan-in follows the PyTorch convention.
    pub fn param_sizes(&self) -> (usize, usize, usize) {
        match *self {
            LayerSpec::Conv {
                dims,
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let area = match dims {
                    SpatialDims::One => kernel,
                    SpatialDims::Two => kernel * kernel,
                };
                (out_channels * in_channels * area, out_channels, in_channels * area)
            }
            LayerSpec::ConvTranspose {
                dims,
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let area = match dims {
                    SpatialDims::One => kernel,
                    SpatialDims::Two => kernel * kernel,
                };
                (in_channels * out_channels * area, out_channels, out_channels * area)
            }
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => (out_features * in_features, out_features, in_features),
            LayerSpec::Flatten | LayerSpec::Unflatten { .. } => (0, 0, 0),
        }
    }

    /// Uniform on `(-1/√fan_in, 1/√fan_in)` for weights and biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> LayerParams {
        let (nw, nb, fan_in) = self.param_sizes();
        if nw == 0 {
            return LayerParams::default();
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = (0..nw).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..nb).map(|_| rng.random_range(-bound..bound)).collect();
        LayerParams { weight, bias }
    }

    pub fn zero_params(&self) -> LayerParams {
        let (nw, nb, _) = self.param_sizes();
        LayerParams::zeros(nw, nb)
    }

    fn conv_geom(&self, input: FieldShape, output: FieldShape) -> ConvGeom {
        match *self {
            LayerSpec::Conv {
                dims,
                kernel,
                stride,
                padding,
                ..
            } => {
                let [kh, kw, sh, sw, ph, pw] = Self::kernel_geometry(dims, kernel, stride, padding);
                ConvGeom {
                    c: input.channels,
                    h: input.height,
                    w: input.width,
                    kh,
                    kw,
                    sh,
                    sw,
                    ph,
                    pw,
                    oh: output.height,
                    ow: output.width,
                }
            }
            // the transposed layer is the adjoint of a convolution from the
            // output grid back onto the input grid
            LayerSpec::ConvTranspose {
                dims,
                kernel,
                stride,
                padding,
                ..
            } => {
                let [kh, kw, sh, sw, ph, pw] = Self::kernel_geometry(dims, kernel, stride, padding);
                ConvGeom {
                    c: output.channels,
                    h: output.height,
                    w: output.width,
                    kh,
                    kw,
                    sh,
                    sw,
                    ph,
                    pw,
                    oh: input.height,
                    ow: input.width,
                }
            }
            _ => unreachable!("conv geometry requested for a non-convolutional layer"),
        }
    }

    /// Pre-activation output `z` of one sample. `input`/`output` are the
    /// shapes returned by [`Self::output_shape`].
    pub fn forward(
        &self,
        params: &LayerParams,
        input: FieldShape,
        output: FieldShape,
        x: &[f64],
    ) -> Vec<f64> {
        debug_assert_eq!(x.len(), input.len());
        match *self {
            LayerSpec::Conv { out_channels, .. } => {
                let g = self.conv_geom(input, output);
                let p = g.positions();
                let mut cols = vec![0.0; g.rows() * p];
                g.im2col(x, &mut cols);
                let mut z = vec![0.0; out_channels * p];
                for (o, row) in z.chunks_exact_mut(p).enumerate() {
                    row.fill(params.bias[o]);
                }
                gemm(out_channels, g.rows(), p, &params.weight, false, &cols, false, 1.0, &mut z);
                z
            }
            LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                ..
            } => {
                let g = self.conv_geom(input, output);
                let p = g.positions();
                let mut cols = vec![0.0; g.rows() * p];
                gemm(g.rows(), in_channels, p, &params.weight, true, x, false, 0.0, &mut cols);
                let mut z = vec![0.0; output.len()];
                let plane = output.height * output.width;
                for o in 0..out_channels {
                    z[o * plane..(o + 1) * plane].fill(params.bias[o]);
                }
                g.col2im(&cols, &mut z);
                z
            }
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => {
                let mut z = params.bias.clone();
                gemm(out_features, in_features, 1, &params.weight, false, x, false, 1.0, &mut z);
                z
            }
            LayerSpec::Flatten | LayerSpec::Unflatten { .. } => x.to_vec(),
        }
    }

    /// Given `dz = ∂L/∂z` for one sample, accumulates parameter gradients into
    /// `grads` and returns `∂L/∂x`.
    pub fn backward(
        &self,
        params: &LayerParams,
        input: FieldShape,
        output: FieldShape,
        x: &[f64],
        dz: &[f64],
        grads: &mut LayerParams,
    ) -> Vec<f64> {
        match *self {
            LayerSpec::Conv { out_channels, .. } => {
                let g = self.conv_geom(input, output);
                let p = g.positions();
                let mut cols = vec![0.0; g.rows() * p];
                g.im2col(x, &mut cols);
                gemm(out_channels, p, g.rows(), dz, false, &cols, true, 1.0, &mut grads.weight);
                for (o, row) in dz.chunks_exact(p).enumerate() {
                    grads.bias[o] += row.iter().sum::<f64>();
                }
                let mut dcols = vec![0.0; g.rows() * p];
                gemm(g.rows(), out_channels, p, &params.weight, true, dz, false, 0.0, &mut dcols);
                let mut dx = vec![0.0; input.len()];
                g.col2im(&dcols, &mut dx);
                dx
            }
            LayerSpec::ConvTranspose {
                in_channels,
                out_channels,
                ..
            } => {
                let g = self.conv_geom(input, output);
                let p = g.positions();
                let mut dcols = vec![0.0; g.rows() * p];
                g.im2col(dz, &mut dcols);
                gemm(in_channels, p, g.rows(), x, false, &dcols, true, 1.0, &mut grads.weight);
                let plane = output.height * output.width;
                for o in 0..out_channels {
                    grads.bias[o] += dz[o * plane..(o + 1) * plane].iter().sum::<f64>();
                }
                let mut dx = vec![0.0; input.len()];
                gemm(in_channels, g.rows(), p, &params.weight, false, &dcols, false, 0.0, &mut dx);
                dx
            }
            LayerSpec::Linear {
                in_features,
                out_features,
                ..
            } => {
                gemm(out_features, 1, in_features, dz, false, x, false, 1.0, &mut grads.weight);
                for (b, d) in grads.bias.iter_mut().zip(dz) {
                    *b += d;
                }
                let mut dx = vec![0.0; in_features];
                gemm(in_features, out_features, 1, &params.weight, true, dz, false, 0.0, &mut dx);
                dx
            }
            LayerSpec::Flatten | LayerSpec::Unflatten { .. } => dz.to_vec(),
        }
    }
}
