//! Non-intrusive reduced-order modeling for time-dependent parametrized problems.
//!
//! The pipeline compresses full-order snapshots with a reducer (a convolutional
//! autoencoder or a POD basis), models each training parameter's latent
//! trajectory with higher-order dynamic mode decomposition, and answers queries
//! at new `(t, ω)` by predicting in time, interpolating across parameters and
//! decoding back to the full-order field.
//!
//! Modules, bottom-up:
//!
//! * [`numerics`]: dense SVD, eigendecomposition, least squares, pseudoinverse.
//! * [`nn`]: the small neural-network engine used by the autoencoder.
//! * [`reduction`]: POD and CAE reducers behind one [`reduction::Reducer`] trait.
//! * [`dmd`]: DMD / HODMD fitting and prediction.
//! * [`rom`]: offline/online pipeline, interpolators and error metrics.
//! * [`data`]: dataset generators and the snapshot container.
//! * [`config`]: the JSON run configuration used by the CLI.

pub mod config;
pub mod data;
pub mod dmd;
pub mod error;
pub mod format;
pub mod nn;
pub mod numerics;
pub mod par;
pub mod reduction;
pub mod rom;

pub use error::{Result, RomError};
