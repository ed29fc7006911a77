//! A minimal neural-network engine: strided (transposed) convolutions in one
//! and two dimensions, fully-connected layers, SiLU, reverse-mode gradients,
//! Adam with coupled weight decay, a step learning-rate schedule and early
//! stopping.

mod checkpoint;
mod gemm;
mod layer;
mod network;
mod optim;
mod tensor;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layer::{silu, silu_derivative, Activation, LayerParams, LayerSpec, SpatialDims};
pub use network::{NetParams, Network, Trace};
pub use optim::{learning_rate_at, Adam, AdamState};
pub use tensor::{FieldShape, FieldTensor};
pub use train::{
    train_autoencoder, validation_value, EarlyStopping, EpochRecord, StopDecision, TrainConfig, TrainingLog,
    ValidationMetric,
};
