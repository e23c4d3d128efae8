//! Desk-scale target architectures.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use super::{Layer, Model, ModelSpec, ParamSet};
use crate::error::{Error, Result};
use crate::layers::LayerKind;
use crate::scalar::Real;
use crate::seed;
use crate::tensor::Tensor;

pub const MLP_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// `fc1 → relu → fc2 → relu → fc3`, with a leading flatten for non-vector inputs.
    TinyMlp,
    /// Three conv blocks (`conv → relu → pool`, last block unpooled) and a linear head.
    TinyCnn,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::TinyMlp => "tiny_mlp",
            Architecture::TinyCnn => "tiny_cnn",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny_mlp" | "TinyMLP" => Ok(Architecture::TinyMlp),
            "tiny_cnn" | "TinyCNN" => Ok(Architecture::TinyCnn),
            _ => Err(Error::invalid(format!("unknown architecture `{s}`"))),
        }
    }
}

fn layer(id: &str, kind: LayerKind) -> Layer {
    Layer {
        id: id.to_string(),
        kind,
    }
}

fn conv(in_channels: usize, out_channels: usize) -> LayerKind {
    LayerKind::Conv2d {
        in_channels,
        out_channels,
        kernel: 3,
        stride: 1,
        padding: 1,
    }
}

pub fn architecture_spec(arch: Architecture, input_shape: &[usize], classes: usize) -> Result<ModelSpec> {
    let layers = match arch {
        Architecture::TinyMlp => {
            let dim: usize = input_shape.iter().product();
            let mut layers = Vec::new();
            if input_shape.len() != 1 {
                layers.push(layer("flatten", LayerKind::Flatten));
            }
            layers.extend([
                layer(
                    "fc1",
                    LayerKind::Dense {
                        inputs: dim,
                        outputs: MLP_HIDDEN,
                    },
                ),
                layer("relu1", LayerKind::Relu),
                layer(
                    "fc2",
                    LayerKind::Dense {
                        inputs: MLP_HIDDEN,
                        outputs: MLP_HIDDEN,
                    },
                ),
                layer("relu2", LayerKind::Relu),
                layer(
                    "fc3",
                    LayerKind::Dense {
                        inputs: MLP_HIDDEN,
                        outputs: classes,
                    },
                ),
            ]);
            layers
        }
        Architecture::TinyCnn => {
            let (c, h, w) = match *input_shape {
                [c, h, w] if h == w && h >= 8 => (c, h, w),
                _ => {
                    return Err(Error::invalid(format!(
                        "TinyCNN needs a square C×H×W input with H >= 8, got {input_shape:?}"
                    )))
                }
            };
            let features = 16 * (h / 4) * (w / 4);
            vec![
                layer("conv1", conv(c, 8)),
                layer("relu1", LayerKind::Relu),
                layer("pool1", LayerKind::MeanPool2d { kernel: 2 }),
                layer("conv2", conv(8, 16)),
                layer("relu2", LayerKind::Relu),
                layer("pool2", LayerKind::MeanPool2d { kernel: 2 }),
                layer("conv3", conv(16, 16)),
                layer("relu3", LayerKind::Relu),
                layer("flatten", LayerKind::Flatten),
                layer(
                    "fc",
                    LayerKind::Dense {
                        inputs: features,
                        outputs: classes,
                    },
                ),
            ]
        }
    };
    ModelSpec::new(layers, input_shape.to_vec(), classes)
}

/// Fan-in scaled Gaussian initialization (`N(0, 2 / fan_in)` weights, zero
/// biases, unit LayerNorm gains). Byte-identical per seed.
pub fn init_params<S: Real>(spec: &ModelSpec, seed: u64) -> ParamSet<S> {
    let mut rng = seed::rng(seed);
    let mut params = ParamSet::zeros(spec);
    for (i, l) in spec.layers().iter().enumerate() {
        let fan_in = match l.kind {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            LayerKind::LayerNorm { dim } => {
                params.layer_mut(i)[0] = Tensor::full(&[dim], S::one());
                continue;
            }
            _ => continue,
        };
        let std = (2.0 / fan_in as f64).sqrt();
        let weights = &mut params.layer_mut(i)[0];
        for v in weights.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = S::lit(z * std);
        }
    }
    params
}

/// Builds a desk-scale model with seeded parameters.
pub fn build_model<S: Real>(arch: Architecture, input_shape: &[usize], classes: usize, seed: u64) -> Result<Model<S>> {
    if classes < 2 {
        return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
    }
    let spec = architecture_spec(arch, input_shape, classes)?;
    let params = init_params(&spec, seed);
    Model::new(spec, params)
}
