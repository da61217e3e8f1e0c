//! Image-set classification by fusing covariance, subspace and Gaussian
//! descriptors through Riemannian kernels and a gated multi-kernel metric.
//!
//! The pipeline is: [`set_model::encode_set`] turns a `d x n` feature matrix
//! into a [`DescriptorTriple`]; [`KernelBank::build`] computes one Gram matrix
//! per enabled kernel; [`metric::train`] alternates trace-ratio solves with
//! gating updates; [`classifier::predict`] scores new sets by nearest neighbor
//! under the learned metric.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod config;
pub mod error;
pub mod gating;
pub mod harness;
pub mod kernels;
pub mod metric;
pub mod model;
pub mod set_model;
pub mod spd;

pub use classifier::{predict, predict_encoded, set_distance, Prediction};
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use gating::{GatingParams, GatingWeights};
pub use kernels::{KernelBank, KernelId};
pub use metric::{ScatterPair, TraceRatioResult};
pub use model::{fit, ModelState};
pub use set_model::{DescriptorTriple, GaussianDescriptor, GrassmannPoint, ImageSet};
pub use spd::{EigenPair, SpdMatrix, SymMatrix};
