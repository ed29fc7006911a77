use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};

/// Per-sample field layout `(channels, height, width)`; 1D fields have
/// `height = 1`, flat feature vectors are `(features, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl FieldShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        FieldShape {
            channels,
            height,
            width,
        }
    }

    pub const fn flat(features: usize) -> Self {
        FieldShape::new(features, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn is_flat(&self) -> bool {
        self.height == 1 && self.width == 1
    }
}

impl std::fmt::Display for FieldShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.height == 1 {
            write!(f, "{}x{}", self.channels, self.width)
        } else {
            write!(f, "{}x{}x{}", self.channels, self.height, self.width)
        }
    }
}

/// A batch of fields stored row-major as `(batch, channel, y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTensor {
    pub batch: usize,
    pub shape: FieldShape,
    pub values: Vec<f64>,
}

impl FieldTensor {
    pub fn new(batch: usize, shape: FieldShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != batch * shape.len() {
            return Err(RomError::shape(format!(
                "tensor of {batch} x {shape} needs {} values, got {}",
                batch * shape.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("field tensor"));
        }
        Ok(FieldTensor {
            batch,
            shape,
            values,
        })
    }

    pub fn zeros(batch: usize, shape: FieldShape) -> Self {
        FieldTensor {
            batch,
            shape,
            values: vec![0.0; batch * shape.len()],
        }
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.shape.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.shape.len().max(1))
    }

    pub fn from_samples(shape: FieldShape, samples: &[Vec<f64>]) -> Result<Self> {
        let values: Vec<f64> = samples.iter().flatten().copied().collect();
        FieldTensor::new(samples.len(), shape, values)
    }
}
