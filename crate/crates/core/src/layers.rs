//! Layer kinds and their exact forward/backward kernels.
//!
//! Parameter layout per kind:
//! - `Dense`: weight `[out, in]`, bias `[out]`
//! - `Conv2d`: weight `[out_ch, in_ch, k, k]`, bias `[out_ch]`
//! - `LayerNorm`: gain `[dim]`, shift `[dim]`
//! - everything else: no parameters
//!
//! Image tensors are `[channels, height, width]`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Variance guard used by `LayerNorm`.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Flatten,
    MeanPool2d {
        kernel: usize,
    },
    LayerNorm {
        dim: usize,
    },
}

impl LayerKind {
    pub fn is_parametric(&self) -> bool {
        matches!(
            self,
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. } | LayerKind::LayerNorm { .. }
        )
    }

    /// Shapes of the parameter tensors this layer owns, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]],
            LayerKind::LayerNorm { dim } => vec![vec![dim], vec![dim]],
            LayerKind::Relu | LayerKind::Flatten | LayerKind::MeanPool2d { .. } => vec![],
        }
    }

    pub fn validate(&self, id: &str) -> Result<()> {
        let positive = match *self {
            LayerKind::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0,
            LayerKind::MeanPool2d { kernel } => kernel > 0,
            LayerKind::LayerNorm { dim } => dim > 0,
            LayerKind::Relu | LayerKind::Flatten => true,
        };
        if positive {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "layer `{id}`: extents must be positive in {self:?}"
            )))
        }
    }

    /// Output shape for a given input shape, or a shape error naming `id`.
    pub fn output_shape(&self, id: &str, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerKind::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::shape(id, [inputs], input));
                }
                Ok(vec![outputs])
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = image_dims(id, input)?;
                if c != in_channels {
                    return Err(Error::shape(id, format!("[{in_channels}, H, W]"), input));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(Error::shape(id, format!("padded extent >= kernel {kernel}"), input));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::MeanPool2d { kernel } => {
                let [c, h, w] = image_dims(id, input)?;
                if h < kernel || w < kernel {
                    return Err(Error::shape(id, format!("[C, >={kernel}, >={kernel}]"), input));
                }
                Ok(vec![c, h / kernel, w / kernel])
            }
            LayerKind::LayerNorm { dim } => {
                if input.iter().product::<usize>() != dim {
                    return Err(Error::shape(id, format!("{dim} elements"), input));
                }
                Ok(input.to_vec())
            }
        }
    }
}

fn image_dims(id: &str, input: &[usize]) -> Result<[usize; 3]> {
    match *input {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::shape(id, "[C, H, W]", input)),
    }
}

fn check_params<S: Real>(id: &str, kind: &LayerKind, params: &[Tensor<S>]) -> Result<()> {
    let expected = kind.param_shapes();
    if params.len() != expected.len() || params.iter().zip(&expected).any(|(p, e)| p.shape() != e.as_slice()) {
        let actual: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        return Err(Error::shape(format!("{id} (parameters)"), expected, actual));
    }
    Ok(())
}

/// Applies one layer. Pure: identical arguments give bit-identical output.
pub fn apply_layer<S: Real>(id: &str, kind: &LayerKind, params: &[Tensor<S>], input: &Tensor<S>) -> Result<Tensor<S>> {
    check_params(id, kind, params)?;
    let out_shape = kind.output_shape(id, input.shape())?;
    let x = input.data();
    let data = match *kind {
        LayerKind::Dense { inputs, outputs } => {
            let (w, b) = (params[0].data(), params[1].data());
            (0..outputs)
                .map(|o| b[o] + crate::tensor::dot(&w[o * inputs..(o + 1) * inputs], x))
                .collect()
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let geo = ConvGeometry::new(input.shape(), &out_shape, kernel, stride, padding);
            let (w, b) = (params[0].data(), params[1].data());
            let mut out = vec![S::zero(); out_shape.iter().product()];
            for o in 0..out_channels {
                let plane = &mut out[o * geo.oh * geo.ow..(o + 1) * geo.oh * geo.ow];
                plane.iter_mut().for_each(|v| *v = b[o]);
                for c in 0..in_channels {
                    let src = &x[c * geo.h * geo.w..(c + 1) * geo.h * geo.w];
                    for ky in 0..kernel {
                        let rows = geo.valid(ky, geo.h, geo.oh);
                        for kx in 0..kernel {
                            let wv = w[((o * in_channels + c) * kernel + ky) * kernel + kx];
                            let cols = geo.valid(kx, geo.w, geo.ow);
                            for oy in rows.clone() {
                                let iy = oy * stride + ky - padding;
                                let orow = &mut plane[oy * geo.ow..(oy + 1) * geo.ow];
                                let irow = &src[iy * geo.w..(iy + 1) * geo.w];
                                for ox in cols.clone() {
                                    orow[ox] += wv * irow[ox * stride + kx - padding];
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        LayerKind::Relu => x.iter().map(|&v| v.max(S::zero())).collect(),
        LayerKind::Flatten => x.to_vec(),
        LayerKind::MeanPool2d { kernel } => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let inv = S::one() / S::from_count(kernel * kernel);
            let mut out = vec![S::zero(); c * oh * ow];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = S::zero();
                        for ky in 0..kernel {
                            let row = (ch * h + oy * kernel + ky) * w + ox * kernel;
                            acc += x[row..row + kernel].iter().copied().sum::<S>();
                        }
                        out[(ch * oh + oy) * ow + ox] = acc * inv;
                    }
                }
            }
            out
        }
        LayerKind::LayerNorm { .. } => {
            let (gain, shift) = (params[0].data(), params[1].data());
            let (xhat, _) = normalize(x, S::lit(LAYER_NORM_EPS));
            xhat.iter()
                .zip(gain.iter().zip(shift))
                .map(|(&v, (&g, &s))| g * v + s)
                .collect()
        }
    };
    let out = Tensor::from_parts(out_shape, data);
    out.ensure_finite(&format!("forward of layer `{id}`"))?;
    Ok(out)
}

/// Gradients of one layer given the upstream gradient at its output.
///
/// Returns `(grad_input, grad_params)`; `grad_params` is empty when
/// `want_params` is false or the layer owns no parameters.
pub fn backward_layer<S: Real>(
    id: &str,
    kind: &LayerKind,
    params: &[Tensor<S>],
    input: &Tensor<S>,
    grad_out: &Tensor<S>,
    want_params: bool,
) -> Result<(Tensor<S>, Vec<Tensor<S>>)> {
    check_params(id, kind, params)?;
    let out_shape = kind.output_shape(id, input.shape())?;
    if grad_out.shape() != out_shape.as_slice() {
        return Err(Error::shape(format!("{id} (upstream)"), &out_shape, grad_out.shape()));
    }
    let x = input.data();
    let g = grad_out.data();
    let mut grad_params = Vec::new();
    let grad_in: Vec<S> = match *kind {
        LayerKind::Dense { inputs, outputs } => {
            let w = params[0].data();
            let mut gin = vec![S::zero(); inputs];
            for o in 0..outputs {
                let go = g[o];
                for (gi, &wv) in gin.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                    *gi += go * wv;
                }
            }
            if want_params {
                let mut gw = Vec::with_capacity(outputs * inputs);
                for &go in g {
                    gw.extend(x.iter().map(|&xv| go * xv));
                }
                grad_params.push(Tensor::from_parts(vec![outputs, inputs], gw));
                grad_params.push(Tensor::from_parts(vec![outputs], g.to_vec()));
            }
            gin
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let geo = ConvGeometry::new(input.shape(), &out_shape, kernel, stride, padding);
            let w = params[0].data();
            let mut gin = vec![S::zero(); x.len()];
            let mut gw = vec![S::zero(); if want_params { w.len() } else { 0 }];
            for o in 0..out_channels {
                let gplane = &g[o * geo.oh * geo.ow..(o + 1) * geo.oh * geo.ow];
                for c in 0..in_channels {
                    let src = &x[c * geo.h * geo.w..(c + 1) * geo.h * geo.w];
                    let dst = &mut gin[c * geo.h * geo.w..(c + 1) * geo.h * geo.w];
                    for ky in 0..kernel {
                        let rows = geo.valid(ky, geo.h, geo.oh);
                        for kx in 0..kernel {
                            let widx = ((o * in_channels + c) * kernel + ky) * kernel + kx;
                            let wv = w[widx];
                            let cols = geo.valid(kx, geo.w, geo.ow);
                            let mut acc = S::zero();
                            for oy in rows.clone() {
                                let iy = oy * stride + ky - padding;
                                let grow = &gplane[oy * geo.ow..(oy + 1) * geo.ow];
                                let base = iy * geo.w;
                                for ox in cols.clone() {
                                    let ix = base + ox * stride + kx - padding;
                                    dst[ix] += wv * grow[ox];
                                    acc += src[ix] * grow[ox];
                                }
                            }
                            if want_params {
                                gw[widx] += acc;
                            }
                        }
                    }
                }
            }
            if want_params {
                let gb = (0..out_channels)
                    .map(|o| g[o * geo.oh * geo.ow..(o + 1) * geo.oh * geo.ow].iter().copied().sum())
                    .collect();
                grad_params.push(Tensor::from_parts(params[0].shape().to_vec(), gw));
                grad_params.push(Tensor::from_parts(vec![out_channels], gb));
            }
            gin
        }
        LayerKind::Relu => x
            .iter()
            .zip(g)
            .map(|(&xv, &gv)| if xv > S::zero() { gv } else { S::zero() })
            .collect(),
        LayerKind::Flatten => g.to_vec(),
        LayerKind::MeanPool2d { kernel } => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let inv = S::one() / S::from_count(kernel * kernel);
            let mut gin = vec![S::zero(); x.len()];
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let share = g[(ch * oh + oy) * ow + ox] * inv;
                        for ky in 0..kernel {
                            let row = (ch * h + oy * kernel + ky) * w + ox * kernel;
                            gin[row..row + kernel].iter_mut().for_each(|v| *v += share);
                        }
                    }
                }
            }
            gin
        }
        LayerKind::LayerNorm { .. } => {
            let gain = params[0].data();
            let (xhat, inv_std) = normalize(x, S::lit(LAYER_NORM_EPS));
            let dxhat: Vec<S> = g.iter().zip(gain).map(|(&gv, &gn)| gv * gn).collect();
            if want_params {
                let dgain = g.iter().zip(&xhat).map(|(&gv, &xh)| gv * xh).collect();
                grad_params.push(Tensor::from_parts(vec![x.len()], dgain));
                grad_params.push(Tensor::from_parts(vec![x.len()], g.to_vec()));
            }
            normalize_backward(&xhat, inv_std, &dxhat)
        }
    };
    let grad_in = Tensor::from_parts(input.shape().to_vec(), grad_in);
    grad_in.ensure_finite(&format!("backward of layer `{id}`"))?;
    for p in &grad_params {
        p.ensure_finite(&format!("parameter gradient of layer `{id}`"))?;
    }
    Ok((grad_in, grad_params))
}

/// Zero-mean, unit-variance normalization over all elements with variance guard `eps`.
/// Returns the normalized values and `1 / sqrt(var + eps)`.
pub(crate) fn normalize<S: Real>(x: &[S], eps: S) -> (Vec<S>, S) {
    let n = S::from_count(x.len());
    let mean = x.iter().copied().sum::<S>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    let inv_std = S::one() / (var + eps).sqrt();
    (x.iter().map(|&v| (v - mean) * inv_std).collect(), inv_std)
}

/// Gradient through [`normalize`] given `dL/dxhat`.
pub(crate) fn normalize_backward<S: Real>(xhat: &[S], inv_std: S, dxhat: &[S]) -> Vec<S> {
    let n = S::from_count(xhat.len());
    let sum_d: S = dxhat.iter().copied().sum();
    let sum_dx: S = dxhat.iter().zip(xhat).map(|(&d, &xh)| d * xh).sum();
    dxhat
        .iter()
        .zip(xhat)
        .map(|(&d, &xh)| inv_std / n * (n * d - sum_d - xh * sum_dx))
        .collect()
}

struct ConvGeometry {
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeometry {
    fn new(input: &[usize], output: &[usize], _kernel: usize, stride: usize, padding: usize) -> Self {
        ConvGeometry {
            h: input[1],
            w: input[2],
            oh: output[1],
            ow: output[2],
            stride,
            padding,
        }
    }

    /// Output positions `o` for which `o * stride + k - padding` lands inside `[0, extent)`.
    fn valid(&self, k: usize, extent: usize, out_extent: usize) -> Range<usize> {
        let lo = if k >= self.padding {
            0
        } else {
            (self.padding - k).div_ceil(self.stride)
        };
        let hi = if extent + self.padding <= k {
            0
        } else {
            ((extent - 1 + self.padding - k) / self.stride + 1).min(out_extent)
        };
        lo.min(hi)..hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let out = apply_layer("r", &LayerKind::Relu, &[], &t(&[3], &[-1.0, 0.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn dense_is_a_dot_product() {
        let kind = LayerKind::Dense { inputs: 2, outputs: 1 };
        let params = [t(&[1, 2], &[1.0, 1.0]), t(&[1], &[0.0])];
        let out = apply_layer("d", &kind, &params, &t(&[2], &[3.0, 4.0])).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn conv_of_ones_matches_hand_sum() {
        let kind = LayerKind::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 0,
        };
        let params = [t(&[1, 1, 3, 3], &[1.0; 9]), t(&[1], &[0.0])];
        let out = apply_layer("c", &kind, &params, &t(&[1, 3, 3], &[1.0; 9])).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[9.0]);
    }

    #[test]
    fn padded_strided_conv_matches_naive_loop() {
        let kind = LayerKind::Conv2d {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            stride: 2,
            padding: 1,
        };
        let (c, h, w) = (2, 5, 4);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let wt: Vec<f64> = (0..3 * 2 * 9).map(|i| (i as f64 * 0.11).cos()).collect();
        let b = [0.1, -0.2, 0.3];
        let out = apply_layer("c", &kind, &[t(&[3, 2, 3, 3], &wt), t(&[3], &b)], &t(&[c, h, w], &x)).unwrap();
        let (oh, ow) = (out.shape()[1], out.shape()[2]);
        assert_eq!((oh, ow), (3, 2));
        for o in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for ch in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += wt[((o * 2 + ch) * 3 + ky) * 3 + kx]
                                        * x[(ch * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    let got = out.data()[(o * oh + oy) * ow + ox];
                    assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn mean_pool_averages_blocks() {
        let out = apply_layer(
            "p",
            &LayerKind::MeanPool2d { kernel: 2 },
            &[],
            &t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]),
        )
        .unwrap();
        assert_eq!(out.data(), &[2.5]);
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let kind = LayerKind::Dense { inputs: 3, outputs: 1 };
        let params = [t(&[1, 3], &[1.0; 3]), t(&[1], &[0.0])];
        let err = apply_layer("fc7", &kind, &params, &t(&[2], &[1.0, 2.0])).unwrap_err();
        assert!(err.to_string().contains("fc7"), "{err}");

        let conv = LayerKind::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 5,
            stride: 1,
            padding: 0,
        };
        assert!(conv.output_shape("c", &[1, 3, 3]).is_err());
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let (gin, _) = backward_layer("r", &LayerKind::Relu, &[], &t(&[1], &[-1.0]), &t(&[1], &[1.0]), true).unwrap();
        assert_eq!(gin.data(), &[0.0]);
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let kind = LayerKind::LayerNorm { dim: 4 };
        let params = [t(&[4], &[1.0; 4]), t(&[4], &[0.0; 4])];
        let out = apply_layer("ln", &kind, &params, &t(&[4], &[1.0, 2.0, 3.0, 6.0])).unwrap();
        let mean: f64 = out.data().iter().sum::<f64>() / 4.0;
        let var: f64 = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }
}
