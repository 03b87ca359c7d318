#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]
//! Shallow ReLU networks trained by constant-step gradient descent on the
//! logistic loss, with the machinery to measure how well they are calibrated.
//!
//! The crate is organised bottom-up:
//!
//! * [`metrics`]: logistic loss, sigmoid, binary KL and the calibration chain.
//! * [`network`]: the predictor, its feature gradient and frozen features.
//! * [`engine`]: batched predictions/gradients (dense, or prefix sums for 1D data).
//! * [`trainer`]: gradient descent, iterate selection and the per-step monitors.
//! * [`reference`]: infinite-width random-feature reference models.
//! * [`distributions`]: synthetic distributions, population risk, IDX ingestion.
//! * [`interpolation`]: 1-NN versus k-NN inconsistency experiments in 1D.
//! * [`diagnostics`]: Monte Carlo checks of the concentration and linearization bounds.
//! * [`harness`]: regime schedules, bound terms, experiments and sweeps.

pub mod diagnostics;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod harness;
pub mod interpolation;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod reference;
pub mod seed;
pub mod serde_ext;
pub mod summary;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use network::Network;
