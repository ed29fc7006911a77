use std::ops::Range;

use rand::Rng;

use super::layer::{LayerParams, LayerSpec};
use super::tensor::{FieldShape, FieldTensor};
use crate::error::{Result, RomError};
use crate::par;

/// A sequential stack of layers with all intermediate shapes resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    shapes: Vec<FieldShape>,
}

/// Parameters of every layer of a [`Network`], in layer order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetParams {
    pub layers: Vec<LayerParams>,
}

impl NetParams {
    pub fn zeros_like(&self) -> Self {
        NetParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.weight.len(), l.bias.len()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn add_assign(&mut self, other: &NetParams) {
        for (a, b) in self.slices_mut().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// Flat copy of all parameters in layer order (weights before biases).
    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flatten().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for a in self.slices_mut() {
            let n = a.len();
            a.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }
}

/// Per-layer inputs and pre-activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl Network {
    pub fn new(input: FieldShape, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input);
        for layer in &layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(Network { layers, shapes })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> FieldShape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> FieldShape {
        *self.shapes.last().unwrap()
    }

    /// Shape entering layer `i` (or the network output for `i == layers.len()`).
    pub fn shape_at(&self, i: usize) -> FieldShape {
        self.shapes[i]
    }

    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> NetParams {
        NetParams {
            layers: self.layers.iter().map(|l| l.init_params(rng)).collect(),
        }
    }

    pub fn zero_params(&self) -> NetParams {
        NetParams {
            layers: self.layers.iter().map(|l| l.zero_params()).collect(),
        }
    }

    pub fn check_params(&self, params: &NetParams) -> Result<()> {
        if params.layers.len() != self.layers.len() {
            return Err(RomError::shape(format!(
                "network has {} layers, parameters cover {}",
                self.layers.len(),
                params.layers.len()
            )));
        }
        for (i, (spec, p)) in self.layers.iter().zip(&params.layers).enumerate() {
            let (nw, nb, _) = spec.param_sizes();
            if p.weight.len() != nw || p.bias.len() != nb {
                return Err(RomError::shape(format!(
                    "layer {i} ({}) expects {nw} weights and {nb} biases, got {} and {}",
                    spec.name(),
                    p.weight.len(),
                    p.bias.len()
                )));
            }
        }
        if !params.all_finite() {
            return Err(RomError::NonFinite("network parameters"));
        }
        Ok(())
    }

    /// Runs layers `range` on one sample whose shape is `shape_at(range.start)`.
    pub fn forward_range(&self, params: &NetParams, range: Range<usize>, x: &[f64]) -> Result<Vec<f64>> {
        let expected = self.shapes[range.start].len();
        if x.len() != expected {
            return Err(RomError::shape(format!(
                "input of layer {} needs {expected} values, got {}",
                range.start,
                x.len()
            )));
        }
        let mut a = x.to_vec();
        for i in range {
            let spec = &self.layers[i];
            let mut z = spec.forward(&params.layers[i], self.shapes[i], self.shapes[i + 1], &a);
            let act = spec.activation();
            z.iter_mut().for_each(|v| *v = act.apply(*v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, params: &NetParams, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_range(params, 0..self.layers.len(), x)
    }

    /// Forward pass over every sample of a batch, in sample order.
    pub fn forward_batch(&self, params: &NetParams, x: &FieldTensor) -> Result<FieldTensor> {
        if x.shape.len() != self.input_shape().len() {
            return Err(RomError::shape(format!(
                "batch of {} does not match network input {}",
                x.shape,
                self.input_shape()
            )));
        }
        let outs = par::try_map_range(x.batch, |i| self.forward(params, x.sample(i)))?;
        FieldTensor::from_samples(self.output_shape(), &outs)
    }

    pub fn forward_trace(&self, params: &NetParams, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_shape().len() {
            return Err(RomError::shape(format!(
                "network input needs {} values, got {}",
                self.input_shape().len(),
                x.len()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        let mut a = x.to_vec();
        for i in 0..n {
            let spec = &self.layers[i];
            let z = spec.forward(&params.layers[i], self.shapes[i], self.shapes[i + 1], &a);
            let act = spec.activation();
            let next: Vec<f64> = z.iter().map(|v| act.apply(*v)).collect();
            inputs.push(std::mem::replace(&mut a, next));
            pre_activations.push(z);
        }
        Ok(Trace {
            inputs,
            pre_activations,
            output: a,
        })
    }

    /// Reverse-mode pass: given `∂L/∂output`, returns `∂L/∂input` and the
    /// parameter gradients.
    pub fn backward(&self, params: &NetParams, trace: &Trace, upstream: &[f64]) -> Result<(Vec<f64>, NetParams)> {
        if upstream.len() != trace.output.len() {
            return Err(RomError::shape(format!(
                "upstream gradient has {} values, output has {}",
                upstream.len(),
                trace.output.len()
            )));
        }
        if trace.inputs.len() != self.layers.len() {
            return Err(RomError::shape("trace was recorded on a different network"));
        }
        let mut grads = self.zero_params();
        let mut g = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let spec = &self.layers[i];
            let act = spec.activation();
            let dz: Vec<f64> = g
                .iter()
                .zip(&trace.pre_activations[i])
                .map(|(gi, zi)| gi * act.derivative(*zi))
                .collect();
            g = spec.backward(
                &params.layers[i],
                self.shapes[i],
                self.shapes[i + 1],
                &trace.inputs[i],
                &dz,
                &mut grads.layers[i],
            );
        }
        Ok((g, grads))
    }
}
