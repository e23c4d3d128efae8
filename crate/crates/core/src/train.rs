//! Mini-batch SGD with Nesterov momentum, linear warmup and cosine decay.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::data::{augment_flip, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::model::{Model, ParamSet};
use crate::scalar::Real;
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Nesterov momentum coefficient.
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub warmup_epochs: usize,
    /// Epochs without validation-accuracy improvement before stopping.
    pub patience: usize,
    pub flip: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 100,
            max_epochs: 400,
            warmup_epochs: 5,
            patience: 20,
            flip: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Preset that memorizes a small training set: no weight decay, no
    /// augmentation, patience long enough to never stop early.
    pub fn overfit(seed: u64) -> Self {
        TrainConfig {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 32,
            max_epochs: 40,
            warmup_epochs: 2,
            patience: 40,
            flip: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!(
                "lr must be a finite value >= 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be >= 0"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("batch size and max epochs must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if self.warmup_epochs > self.max_epochs {
            return Err(Error::invalid("warmup epochs exceed max epochs"));
        }
        Ok(())
    }
}

/// Learning rate for 0-based `epoch`: `lr·(e+1)/w` during warmup, then
/// `lr·½(1 + cos(π (e − w)/(E − w)))`, which equals `lr` on both sides of
/// the warmup boundary and reaches 0 at `E = max_epochs`.
pub fn learning_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    let w = cfg.warmup_epochs;
    if epoch < w {
        return cfg.lr * (epoch + 1) as f64 / w as f64;
    }
    let span = (cfg.max_epochs - w).max(1) as f64;
    let progress = ((epoch - w) as f64 / span).min(1.0);
    cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss over the epoch's mini-batches.
    pub train_loss: f64,
    /// Accuracy of the predictions made during the epoch's forward passes.
    pub train_acc: f64,
    /// Accuracy on the validation ids after the epoch; `None` without validation ids.
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "epoch,lr,train_loss,train_acc,val_acc")?;
        for r in &self.epochs {
            let val = r.val_acc.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", r.epoch, r.lr, r.train_loss, r.train_acc, val)?;
        }
        Ok(())
    }
}

/// Fraction of `ids` whose argmax prediction (ties to the lowest class) equals the label.
pub fn accuracy<S: Real>(model: &Model<S>, ds: &Dataset<S>, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::invalid("accuracy over an empty id set"));
    }
    ds.check_ids(ids)?;
    let mut correct = 0usize;
    for &id in ids {
        if model.predict(ds.x(id))? == ds.y(id) {
            correct += 1;
        }
    }
    Ok(correct as f64 / ids.len() as f64)
}

struct Sgd<S> {
    velocity: Vec<Tensor<S>>,
}

impl<S: Real> Sgd<S> {
    fn new(params: &ParamSet<S>) -> Self {
        Sgd {
            velocity: params.tensors().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    fn step(&mut self, params: &mut ParamSet<S>, grads: &ParamSet<S>, lr: S, momentum: S, decay: S) {
        for ((p, g), v) in params.tensors_mut().zip(grads.tensors()).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                let g_total = gv + decay * *pv;
                let update = if momentum == S::zero() {
                    g_total
                } else {
                    *vv = momentum * *vv + g_total;
                    g_total + momentum * *vv
                };
                *pv -= lr * update;
            }
        }
    }
}

/// Minimizes the mean cross-entropy over `split.members`.
pub fn train<S: Real>(
    model: &Model<S>,
    ds: &Dataset<S>,
    split: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<(Model<S>, TrainHistory)> {
    cfg.validate()?;
    if split.members.is_empty() {
        return Err(Error::invalid("no training members"));
    }
    ds.check_ids(&split.members)?;
    ds.check_ids(&split.validation)?;
    let flip = cfg.flip && ds.shape().len() == 3;

    let mut rng = seed::rng(seed::derive(cfg.seed, "train"));
    let mut current = model.clone();
    let mut sgd = Sgd::new(current.params());
    let mut order = split.members.clone();
    let mut history = TrainHistory::default();
    let mut best_val = f64::NEG_INFINITY;
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let lr = learning_rate(cfg, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_sum = ParamSet::zeros(current.spec());
            let mut batch_loss = S::zero();
            for &id in batch {
                let x = if flip {
                    augment_flip(ds.x(id), rng.random_bool(0.5))?
                } else {
                    ds.x(id).clone()
                };
                let cache = current.forward_cache(&x).map_err(|_| Error::Diverged { epoch })?;
                if cache.logits().argmax() == ds.y(id) {
                    correct += 1;
                }
                let (loss, grad_logits) =
                    crate::loss::cross_entropy(cache.logits(), ds.y(id)).map_err(|_| Error::Diverged { epoch })?;
                let last = current.spec().layers().len() - 1;
                let grads = current
                    .backward(&cache, &[(last, grad_logits)], true)
                    .map_err(|_| Error::Diverged { epoch })?;
                let gp = grads.params.expect("requested");
                for (acc, g) in grad_sum.tensors_mut().zip(gp.tensors()) {
                    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                batch_loss += loss;
            }
            let n = S::from_count(batch.len());
            let mean_loss = (batch_loss / n).as_f64();
            if !mean_loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += mean_loss;
            batches += 1;
            for t in grad_sum.tensors_mut() {
                t.data_mut().iter_mut().for_each(|v| *v /= n);
            }
            sgd.step(
                current.params_mut(),
                &grad_sum,
                S::lit(lr),
                S::lit(cfg.momentum),
                S::lit(cfg.weight_decay),
            );
            if current
                .params()
                .tensors()
                .any(|t| t.ensure_finite("parameters").is_err())
            {
                return Err(Error::Diverged { epoch });
            }
        }
        let val_acc = if split.validation.is_empty() {
            None
        } else {
            Some(accuracy(&current, ds, &split.validation)?)
        };
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / batches as f64,
            train_acc: correct as f64 / order.len() as f64,
            val_acc,
        });
        if let Some(v) = val_acc {
            if v > best_val {
                best_val = v;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok((current, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stratified_split, synth_blobs, SplitConfig};
    use crate::layers::LayerKind;
    use crate::model::{build_model, Architecture, Layer, ModelSpec};

    fn cfg() -> TrainConfig {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 16,
            max_epochs: 10,
            warmup_epochs: 3,
            patience: 100,
            flip: false,
            seed: 4,
        }
    }

    #[test]
    fn schedule_hits_lr_at_warmup_boundary() {
        let c = cfg();
        assert!((learning_rate(&c, 0) - 0.1 / 3.0).abs() < 1e-15);
        assert!((learning_rate(&c, 2) - 0.1).abs() < 1e-15);
        assert_eq!(learning_rate(&c, 3), 0.1);
        assert!(learning_rate(&c, 9) < learning_rate(&c, 4));
        let no_warmup = TrainConfig { warmup_epochs: 0, ..c };
        assert_eq!(learning_rate(&no_warmup, 0), 0.1);
        for e in 1..10 {
            assert!(learning_rate(&no_warmup, e) <= learning_rate(&no_warmup, e - 1));
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { momentum: 1.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..cfg() }.validate().is_err());
        assert!(TrainConfig {
            warmup_epochs: 11,
            ..cfg()
        }
        .validate()
        .is_err());
        assert!(TrainConfig { lr: -1.0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    fn blobs() -> (Dataset<f64>, SplitPlan) {
        let ds = synth_blobs::<f64>(2, 60, &[6], 0.3, 2).unwrap();
        let split = stratified_split(
            &ds,
            &SplitConfig {
                validation_fraction: 0.05,
                attack_validation: 5,
                attack_test: 5,
            },
            1,
        )
        .unwrap();
        (ds, split)
    }

    #[test]
    fn separable_blobs_are_fit() {
        let (ds, split) = blobs();
        let model = build_model::<f64>(Architecture::TinyMlp, &[6], 2, 3).unwrap();
        let (trained, history) = train(&model, &ds, &split, &cfg()).unwrap();
        assert!(accuracy(&trained, &ds, &split.members).unwrap() >= 0.99);
        assert_eq!(history.epochs.len(), 10);
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let (ds, split) = blobs();
        let model = build_model::<f64>(Architecture::TinyMlp, &[6], 2, 3).unwrap();
        let (trained, _) = train(
            &model,
            &ds,
            &split,
            &TrainConfig {
                lr: 0.0,
                weight_decay: 0.0,
                ..cfg()
            },
        )
        .unwrap();
        assert_eq!(trained.params(), model.params());
    }

    #[test]
    fn training_is_deterministic() {
        let (ds, split) = blobs();
        let model = build_model::<f64>(Architecture::TinyMlp, &[6], 2, 3).unwrap();
        let c = TrainConfig { max_epochs: 3, ..cfg() };
        let a = train(&model, &ds, &split, &c).unwrap();
        let b = train(&model, &ds, &split, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (ds, split) = blobs();
        let model = build_model::<f64>(Architecture::TinyMlp, &[6], 2, 3).unwrap();
        let c = TrainConfig {
            patience: 1,
            max_epochs: 30,
            ..cfg()
        };
        let (_, h) = train(&model, &ds, &split, &c).unwrap();
        assert!(h.stopped_early);
        assert!(h.epochs.len() < 30);
    }

    #[test]
    fn divergence_reports_epoch() {
        let (ds, split) = blobs();
        let model = build_model::<f64>(Architecture::TinyMlp, &[6], 2, 3).unwrap();
        let c = TrainConfig {
            lr: 1e300,
            momentum: 0.0,
            warmup_epochs: 0,
            ..cfg()
        };
        assert!(matches!(train(&model, &ds, &split, &c), Err(Error::Diverged { .. })));
    }

    #[test]
    fn accuracy_edge_cases() {
        // Constant class-0 predictor: zero weights, bias favouring class 0.
        let spec = ModelSpec::new(
            vec![Layer {
                id: "fc".into(),
                kind: LayerKind::Dense { inputs: 2, outputs: 2 },
            }],
            vec![2],
            2,
        )
        .unwrap();
        let params = ParamSet::from_layers(
            &spec,
            vec![vec![Tensor::zeros(&[2, 2]), Tensor::vector(vec![1.0, 0.0]).unwrap()]],
        )
        .unwrap();
        let model = Model::new(spec, params).unwrap();
        let xs: Vec<_> = (0..4).map(|i| Tensor::vector(vec![i as f64, 1.0]).unwrap()).collect();
        let zeros = Dataset::new(xs.clone(), vec![0; 4], 2).unwrap();
        let ones = Dataset::new(xs, vec![1; 4], 2).unwrap();
        assert_eq!(accuracy(&model, &zeros, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&model, &ones, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert!(accuracy(&model, &ones, &[]).is_err());
    }

    #[test]
    fn history_csv_header() {
        let h = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 0,
                lr: 0.1,
                train_loss: 0.5,
                train_acc: 0.75,
                val_acc: None,
            }],
            stopped_early: false,
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,lr,train_loss,train_acc,val_acc\n0,0.1,0.5,0.75,\n"
        );
    }
}
