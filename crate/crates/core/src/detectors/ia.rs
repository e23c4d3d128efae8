//! Input-activation meta-classifier.
//!
//! Features of a query `(x, y)` are the penultimate activation `a` (the
//! input of the final dense layer), the loss gradient with respect to `a`,
//! and `a ⊙ W[y, :]`, the per-unit contribution to the true-class logit. A
//! small MLP trained on shadow models maps these to a membership probability.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::obfuscation::Obfuscation;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interrogation::{adam_step, AdamState};
use crate::layers::LayerKind;
use crate::loss::{logistic_loss, sigmoid, softmax};
use crate::model::{ActivationTrace, Model, ModelSpec};
use crate::scalar::Real;
use crate::seed;
use crate::tensor::Tensor;

/// Bound on standardized meta features, so units that are nearly constant
/// on the training shadows cannot dominate elsewhere.
pub const FEATURE_CLAMP: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IaConfig {
    pub hidden: usize,
    pub lr: f64,
    /// Learning rate reached at the last epoch (exponential decay).
    pub final_lr: f64,
    pub batch_size: usize,
    /// Epochs without meta-validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for IaConfig {
    fn default() -> Self {
        IaConfig {
            hidden: 32,
            lr: 1e-3,
            final_lr: 1e-4,
            batch_size: 128,
            patience: 5,
            max_epochs: 30,
            seed: 0,
        }
    }
}

impl IaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::invalid(
                "IA hidden width, batch size, patience and epochs must be positive",
            ));
        }
        if !(self.lr > 0.0 && self.final_lr > 0.0) || !self.lr.is_finite() || !self.final_lr.is_finite() {
            return Err(Error::invalid("IA learning rates must be positive"));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        if self.max_epochs == 1 {
            return self.lr;
        }
        let t = epoch as f64 / (self.max_epochs - 1) as f64;
        self.lr * (self.final_lr / self.lr).powf(t)
    }
}

/// A model trained like the target on its own data, with known membership.
#[derive(Debug, Clone)]
pub struct ShadowSet<S> {
    pub model: Model<S>,
    pub data: Dataset<S>,
    pub members: Vec<usize>,
    pub nonmembers: Vec<usize>,
}

/// `(penultimate width p, final dense layer index)`; the model must end in a dense layer.
fn head(spec: &ModelSpec) -> Result<(usize, usize)> {
    let last = spec.layers().len() - 1;
    match spec.layers()[last].kind {
        LayerKind::Dense { inputs, .. } => Ok((inputs, last)),
        _ => Err(Error::invalid("input-activation features need a final dense layer")),
    }
}

/// Feature vector of length `3p` for `(x, y)`; activations are read through
/// `defense` when given.
pub fn ia_features<S: Real>(
    model: &Model<S>,
    x: &Tensor<S>,
    y: usize,
    defense: Option<&Obfuscation>,
) -> Result<Vec<f64>> {
    let (p, last) = head(model.spec())?;
    if y >= model.spec().classes() {
        return Err(Error::invalid(format!("label {y} out of range")));
    }
    let activation = if last == 0 {
        x.clone()
    } else {
        let cache = model.forward_cache(x)?;
        let id = model.spec().layers()[last - 1].id.clone();
        let raw = ActivationTrace::new(vec![(id.clone(), cache.output(last - 1).clone())]);
        match defense {
            Some(d) => d.expose(x, &raw)?.get(&id).expect("same ids").clone(),
            None => raw.get(&id).expect("present").clone(),
        }
    };
    let a: Vec<f64> = activation.data().iter().map(|v| v.as_f64()).collect();
    let params = model.params().layer(last);
    let w: Vec<f64> = params[0].data().iter().map(|v| v.as_f64()).collect();
    let b: Vec<f64> = params[1].data().iter().map(|v| v.as_f64()).collect();
    let classes = b.len();
    let logits: Vec<f64> = (0..classes)
        .map(|c| b[c] + (0..p).map(|j| w[c * p + j] * a[j]).sum::<f64>())
        .collect();
    let mut residual = softmax(&logits);
    residual[y] -= 1.0;
    let mut features = a.clone();
    features.extend((0..p).map(|j| (0..classes).map(|c| w[c * p + j] * residual[c]).sum::<f64>()));
    features.extend((0..p).map(|j| a[j] * w[y * p + j]));
    Ok(features)
}

/// `dim → hidden → ReLU → 1` network on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaMlp {
    pub w1: Tensor<f64>,
    pub b1: Tensor<f64>,
    pub w2: Tensor<f64>,
    pub b2: Tensor<f64>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl MetaMlp {
    /// He-initialized first layer, zero output layer (so every prediction starts at ½).
    pub fn new(dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::invalid("meta classifier needs positive sizes"));
        }
        let mut rng = seed::rng(seed::derive(seed, "ia-meta-init"));
        let std = (2.0 / dim as f64).sqrt();
        let w1 = (0..dim * hidden)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                std * z
            })
            .collect();
        Ok(MetaMlp {
            w1: Tensor::new(vec![hidden, dim], w1)?,
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden]),
            b2: Tensor::zeros(&[1]),
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardized features, clamped to `±FEATURE_CLAMP`.
    fn standardize(&self, f: &[f64]) -> Vec<f64> {
        f.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| ((v - m) / s).clamp(-FEATURE_CLAMP, FEATURE_CLAMP))
            .collect()
    }

    /// Hidden activations (post-ReLU) and the output logit for standardized input `z`.
    fn forward_std(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let dim = z.len();
        let w1 = self.w1.data();
        let hidden: Vec<f64> = (0..self.b1.numel())
            .map(|k| {
                let pre = self.b1.data()[k] + (0..dim).map(|j| w1[k * dim + j] * z[j]).sum::<f64>();
                pre.max(0.0)
            })
            .collect();
        let logit = self.b2.data()[0] + hidden.iter().zip(self.w2.data()).map(|(h, w)| h * w).sum::<f64>();
        (hidden, logit)
    }

    /// Member probability for a raw feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature vector of length {}, meta classifier expects {}",
                features.len(),
                self.dim()
            )));
        }
        let (_, logit) = self.forward_std(&self.standardize(features));
        Ok(sigmoid(logit))
    }

    /// Mean logistic loss and parameter gradients over standardized rows.
    fn batch_grad(&self, rows: &[(&[f64], f64)]) -> Result<(f64, [Tensor<f64>; 4])> {
        let dim = self.dim();
        let hidden = self.b1.numel();
        let mut gw1 = vec![0.0; hidden * dim];
        let mut gb1 = vec![0.0; hidden];
        let mut gw2 = vec![0.0; hidden];
        let mut gb2 = 0.0;
        let mut total = 0.0;
        let inv = 1.0 / rows.len() as f64;
        for &(z, target) in rows {
            let (h, logit) = self.forward_std(z);
            let (loss, dz) = logistic_loss(logit, target > 0.5);
            total += loss;
            gb2 += dz * inv;
            for k in 0..hidden {
                gw2[k] += dz * h[k] * inv;
                if h[k] > 0.0 {
                    let dh = dz * self.w2.data()[k] * inv;
                    gb1[k] += dh;
                    for j in 0..dim {
                        gw1[k * dim + j] += dh * z[j];
                    }
                }
            }
        }
        Ok((
            total * inv,
            [
                Tensor::new(vec![hidden, dim], gw1)?,
                Tensor::vector(gb1)?,
                Tensor::vector(gw2)?,
                Tensor::vector(vec![gb2])?,
            ],
        ))
    }

    fn mean_loss(&self, rows: &[(&[f64], f64)]) -> f64 {
        rows.iter()
            .map(|&(z, t)| logistic_loss(self.forward_std(z).1, t > 0.5).0)
            .sum::<f64>()
            / rows.len() as f64
    }
}

/// Fitted input-activation detector.
#[derive(Debug, Clone, PartialEq)]
pub struct IaMeta {
    pub mlp: MetaMlp,
    /// Defense the target's activations are read through.
    pub defense: Option<Obfuscation>,
    /// Meta-validation loss of the restored network.
    pub best_val_loss: f64,
}

impl IaMeta {
    pub fn score<S: Real>(&self, model: &Model<S>, x: &Tensor<S>, y: usize) -> Result<f64> {
        self.mlp.predict(&ia_features(model, x, y, self.defense.as_ref())?)
    }
}

fn shadow_rows<S: Real>(shadow: &ShadowSet<S>) -> Result<Vec<(Vec<f64>, f64)>> {
    let mut rows = Vec::with_capacity(shadow.members.len() + shadow.nonmembers.len());
    for (ids, label) in [(&shadow.members, 1.0), (&shadow.nonmembers, 0.0)] {
        shadow.data.check_ids(ids)?;
        for &id in ids {
            rows.push((
                ia_features(&shadow.model, shadow.data.x(id), shadow.data.y(id), None)?,
                label,
            ));
        }
    }
    Ok(rows)
}

/// Trains the meta classifier on all shadows but the last, early-stopping on
/// the last. Every shadow must share the target's architecture.
pub fn ia_fit<S: Real>(
    target: &ModelSpec,
    shadows: &[ShadowSet<S>],
    cfg: &IaConfig,
    defense: Option<Obfuscation>,
) -> Result<IaMeta> {
    cfg.validate()?;
    if shadows.len() < 2 {
        return Err(Error::invalid(format!(
            "IA needs at least 2 shadow models (training and validation), got {}",
            shadows.len()
        )));
    }
    if let Some(i) = shadows.iter().position(|s| s.model.spec() != target) {
        return Err(Error::invalid(format!(
            "shadow model {i} differs from the target architecture"
        )));
    }
    head(target)?;
    let (val_shadow, train_shadows) = shadows.split_last().expect("non-empty");
    let mut train_rows = Vec::new();
    for s in train_shadows {
        train_rows.extend(shadow_rows(s)?);
    }
    let val_rows = shadow_rows(val_shadow)?;
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::invalid("shadow models have no member or non-member samples"));
    }

    let dim = train_rows[0].0.len();
    let mut mlp = MetaMlp::new(dim, cfg.hidden, cfg.seed)?;
    let n = train_rows.len() as f64;
    for j in 0..dim {
        let mean = train_rows.iter().map(|(f, _)| f[j]).sum::<f64>() / n;
        let var = train_rows.iter().map(|(f, _)| (f[j] - mean).powi(2)).sum::<f64>() / n;
        mlp.mean[j] = mean;
        mlp.scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    let train_std: Vec<(Vec<f64>, f64)> = train_rows.iter().map(|(f, t)| (mlp.standardize(f), *t)).collect();
    let val_std: Vec<(Vec<f64>, f64)> = val_rows.iter().map(|(f, t)| (mlp.standardize(f), *t)).collect();
    let val_view: Vec<(&[f64], f64)> = val_std.iter().map(|(f, t)| (f.as_slice(), *t)).collect();

    let mut states = [&mlp.w1, &mlp.b1, &mlp.w2, &mlp.b2].map(|t| AdamState::new(t.shape()));
    let mut rng = seed::rng(seed::derive(cfg.seed, "ia-meta-batches"));
    let mut order: Vec<usize> = (0..train_std.len()).collect();
    let mut best = (mlp.mean_loss(&val_view), mlp.clone());
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<(&[f64], f64)> = batch
                .iter()
                .map(|&i| (train_std[i].0.as_slice(), train_std[i].1))
                .collect();
            let (_, grads) = mlp.batch_grad(&rows)?;
            let params = [&mut mlp.w1, &mut mlp.b1, &mut mlp.w2, &mut mlp.b2];
            for ((p, g), st) in params.into_iter().zip(&grads).zip(states.iter_mut()) {
                let state = std::mem::replace(st, AdamState::new(&[1]));
                let (next, next_state) = adam_step(state, p, g, lr)?;
                *p = next;
                *st = next_state;
            }
        }
        let val = mlp.mean_loss(&val_view);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if val < best.0 {
            best = (val, mlp.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(IaMeta {
        mlp: best.1,
        defense,
        best_val_loss: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Architecture};

    fn model() -> Model<f64> {
        build_model(Architecture::TinyMlp, &[4], 3, 7).unwrap()
    }

    #[test]
    fn feature_length_is_three_widths() {
        let m = model();
        let x = Tensor::vector(vec![0.1, -0.2, 0.3, 0.9]).unwrap();
        let f = ia_features(&m, &x, 1, None).unwrap();
        assert_eq!(f.len(), 3 * crate::model::MLP_HIDDEN);
    }

    #[test]
    fn features_use_only_the_true_class_row_for_the_ia_component() {
        let m = model();
        let x = Tensor::vector(vec![0.4, 0.2, -0.3, 0.5]).unwrap();
        let f = ia_features(&m, &x, 2, None).unwrap();
        let p = crate::model::MLP_HIDDEN;
        let last = m.spec().layers().len() - 1;
        let mut params = m.params().clone();
        let w = &mut params.layer_mut(last)[0];
        for (i, v) in w.data_mut().iter_mut().enumerate() {
            if i / p != 2 {
                *v = 0.0;
            }
        }
        let g = ia_features(&m.with_params(params).unwrap(), &x, 2, None).unwrap();
        assert_eq!(f[..p], g[..p]);
        assert_eq!(f[2 * p..], g[2 * p..]);
    }

    #[test]
    fn zero_activation_gives_zero_ia_component() {
        let spec = crate::model::ModelSpec::new(
            vec![crate::model::Layer {
                id: "fc".into(),
                kind: LayerKind::Dense { inputs: 3, outputs: 2 },
            }],
            vec![3],
            2,
        )
        .unwrap();
        let m = Model::new(spec.clone(), crate::model::init_params(&spec, 1)).unwrap();
        let f = ia_features(&m, &Tensor::<f64>::zeros(&[3]), 0, None).unwrap();
        assert!(f[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn untrained_meta_predicts_one_half() {
        let mlp = MetaMlp::new(6, 4, 3).unwrap();
        for f in [[0.0; 6], [1.0, -2.0, 3.0, 0.5, 0.1, 9.0]] {
            assert_eq!(mlp.predict(&f).unwrap(), 0.5);
        }
        assert!(mlp.predict(&[0.0; 5]).is_err());
    }

    #[test]
    fn standardized_features_are_bounded() {
        let mut mlp = MetaMlp::new(2, 3, 1).unwrap();
        mlp.scale = vec![1e-9, 1.0];
        let z = mlp.standardize(&[1.0, -2.0]);
        assert_eq!(z, vec![FEATURE_CLAMP, -2.0]);
    }
}
