//! Desk-scale membership-inference laboratory.
//!
//! The crate trains small classifiers until they memorize, then audits them
//! with white-box membership detectors (gradient likelihood ratio, loss
//! threshold, adversarial distance, self-influence, input-activation meta
//! classifier). Each detector can be run on the raw query or on an
//! *interrogation image*: an input synthesized from noise so that its
//! internal activations match the query's. Scores are evaluated in the
//! low false-positive regime (TPR at 1% / 0.1% FPR, partial AUC).
//!
//! All numeric code is generic over [`Real`] (`f64` or `f32`); the aliases
//! below fix the scalar to `f64`, which is what the CLI and the
//! acceptance suite use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binio;
pub mod data;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod gradcheck;
pub mod interrogation;
pub mod layers;
pub mod loss;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use gradcheck::finite_diff_oracle;
pub use layers::{apply_layer, backward_layer, LayerKind};
pub use model::{
    build_model, layer_groups, ActivationTrace, Architecture, GroupName, Layer, LayerGroup, Model, ModelSpec, ParamSet,
};
pub use scalar::Real;
pub use tensor::{relative_error, Tensor};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Model64 = Model<f64>;
pub type Model32 = Model<f32>;
pub type ParamSet64 = ParamSet<f64>;
pub type ActivationTrace64 = ActivationTrace<f64>;
