//! Interrogation images: inputs synthesized from noise so that their
//! activations at chosen layers match those of a query.
//!
//! The objective is `Σ_ℓ λ_ℓ · MSE(e_ℓ(x_g), e_ℓ(x))`, minimized with Adam
//! from a clamped Gaussian start. The query label is never consulted.

mod adam;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};

use rand_distr::{Distribution, StandardNormal};

use crate::data::Bounds;
use crate::detectors::Obfuscation;
use crate::error::{Error, Result};
use crate::model::{layer_groups, ActivationTrace, GroupName, Model, ModelSpec};
use crate::scalar::Real;
use crate::seed;
use crate::tensor::Tensor;

/// Which activations the perceptual loss compares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    Group(GroupName),
    Layers(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterrogationConfig {
    pub layers: LayerSelection,
    /// Per-layer weights in depth order; `None` means 1 for every layer.
    pub weights: Option<Vec<f64>>,
    pub steps: usize,
    pub lr: f64,
    /// Clamp the image into the data bounds after every step.
    pub clip: bool,
    /// Seed of the initial noise image.
    pub seed: u64,
    /// When set, both traces are read through the obfuscation defense.
    pub defense: Option<Obfuscation>,
}

impl Default for InterrogationConfig {
    fn default() -> Self {
        InterrogationConfig {
            layers: LayerSelection::Group(GroupName::Mid),
            weights: None,
            steps: 80,
            lr: 0.05,
            clip: true,
            seed: 0,
            defense: None,
        }
    }
}

impl InterrogationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("interrogation needs at least one step"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!(
                "interrogation lr must be positive, got {}",
                self.lr
            )));
        }
        if let LayerSelection::Layers(ids) = &self.layers {
            if ids.is_empty() {
                return Err(Error::invalid("interrogation layer list is empty"));
            }
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid("layer weights must be finite and >= 0"));
            }
            if !w.iter().any(|&v| v > 0.0) {
                return Err(Error::invalid("at least one layer weight must be positive"));
            }
        }
        Ok(())
    }

    /// Layer indices (depth order) and their weights for `spec`.
    pub fn resolve<S: Real>(&self, spec: &ModelSpec) -> Result<(Vec<usize>, Vec<S>)> {
        let ids = match &self.layers {
            LayerSelection::Group(name) => layer_groups(spec)?
                .into_iter()
                .find(|g| g.name == *name)
                .map(|g| g.layers)
                .unwrap_or_default(),
            LayerSelection::Layers(ids) => ids.clone(),
        };
        let mut indices = ids.iter().map(|id| spec.index_of(id)).collect::<Result<Vec<_>>>()?;
        let before = indices.len();
        indices.sort_unstable();
        indices.dedup();
        if indices.len() != before {
            return Err(Error::invalid("interrogation layer listed twice"));
        }
        if indices.is_empty() {
            return Err(Error::invalid("interrogation layer group is empty"));
        }
        let weights = match &self.weights {
            None => vec![S::one(); indices.len()],
            Some(w) if w.len() == indices.len() => w.iter().map(|&v| S::lit(v)).collect(),
            Some(w) => {
                return Err(Error::invalid(format!(
                    "{} layer weights for {} layers",
                    w.len(),
                    indices.len()
                )))
            }
        };
        Ok((indices, weights))
    }
}

/// `Σ_ℓ λ_ℓ · MSE(g_ℓ, x_ℓ)` over traces with identical ids and shapes.
pub fn perceptual_loss<S: Real>(
    trace_g: &ActivationTrace<S>,
    trace_x: &ActivationTrace<S>,
    weights: &[S],
) -> Result<S> {
    check_traces(trace_g, trace_x, weights)?;
    let mut total = S::zero();
    for (((_, g), (_, x)), &w) in trace_g.iter().zip(trace_x.iter()).zip(weights) {
        total += w * mse(g.data(), x.data());
    }
    Ok(total)
}

fn check_traces<S: Real>(a: &ActivationTrace<S>, b: &ActivationTrace<S>, weights: &[S]) -> Result<()> {
    if a.len() != b.len() || a.len() != weights.len() {
        return Err(Error::invalid(format!(
            "traces of {} and {} layers with {} weights",
            a.len(),
            b.len(),
            weights.len()
        )));
    }
    for ((ida, ta), (idb, tb)) in a.iter().zip(b.iter()) {
        if ida != idb {
            return Err(Error::invalid(format!("trace layers `{ida}` and `{idb}` differ")));
        }
        ta.expect_same_shape(tb, ida)?;
    }
    Ok(())
}

fn mse<S: Real>(a: &[S], b: &[S]) -> S {
    let sum: S = a.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum();
    sum / S::from_count(a.len())
}

/// Clamps every coordinate into `bounds` when `enabled`; otherwise returns `x` unchanged.
pub fn clip_values<S: Real>(x: &Tensor<S>, bounds: &Bounds<S>, enabled: bool) -> Result<Tensor<S>> {
    x.expect_same_shape(&bounds.min, "clip bounds")?;
    if !enabled {
        return Ok(x.clone());
    }
    let data = x
        .data()
        .iter()
        .zip(bounds.min.data().iter().zip(bounds.max.data()))
        .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Runs `cfg.steps` Adam steps and returns the final image.
pub fn interrogate<S: Real>(
    model: &Model<S>,
    x: &Tensor<S>,
    cfg: &InterrogationConfig,
    bounds: &Bounds<S>,
) -> Result<Tensor<S>> {
    Ok(run(model, x, cfg, bounds, false)?.0)
}

/// Like [`interrogate`], also returning the perceptual loss at every iterate
/// `x_g⁰ … x_g^T` (`steps + 1` values).
pub fn interrogate_with_losses<S: Real>(
    model: &Model<S>,
    x: &Tensor<S>,
    cfg: &InterrogationConfig,
    bounds: &Bounds<S>,
) -> Result<(Tensor<S>, Vec<S>)> {
    run(model, x, cfg, bounds, true)
}

/// Seeded standard Gaussian image clamped into `bounds`.
pub fn initial_image<S: Real>(shape: &[usize], bounds: &Bounds<S>, seed: u64) -> Result<Tensor<S>> {
    let mut rng = seed::rng(seed::derive(seed, "interrogation-init"));
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            S::lit(z)
        })
        .collect();
    clip_values(&Tensor::new(shape.to_vec(), data)?, bounds, true)
}

struct Objective<'a, S> {
    model: &'a Model<S>,
    indices: Vec<usize>,
    weights: Vec<S>,
    target: ActivationTrace<S>,
    defense: Option<Obfuscation>,
}

impl<S: Real> Objective<'_, S> {
    /// Loss at `xg` and, when `grad` is set, its gradient with respect to `xg`.
    fn eval(&self, xg: &Tensor<S>, grad: bool) -> Result<(S, Option<Tensor<S>>)> {
        let cache = self.model.forward_cache(xg)?;
        let raw = self.model.trace_from_cache(&cache, &self.indices);
        let (trace, stats) = match &self.defense {
            Some(d) => {
                let (t, s) = crate::detectors::obfuscation::obfuscate_with_stats(&raw, d.sigma, d.seed_for(xg))?;
                (t, Some(s))
            }
            None => (raw, None),
        };
        let loss = perceptual_loss(&trace, &self.target, &self.weights)?;
        if !loss.is_finite() {
            return Err(Error::non_finite("perceptual loss"));
        }
        if !grad {
            return Ok((loss, None));
        }
        let mut injections = Vec::with_capacity(self.indices.len());
        for (k, (((_, g), (_, x)), &w)) in trace.iter().zip(self.target.iter()).zip(&self.weights).enumerate() {
            let scale = S::lit(2.0) * w / S::from_count(g.numel());
            let mut d = g.zip_map(x, |a, b| scale * (a - b))?;
            if let Some(s) = &stats {
                d = s.backward(k, &d);
            }
            injections.push((self.indices[k], d));
        }
        let grads = self.model.backward(&cache, &injections, false)?;
        Ok((loss, Some(grads.input)))
    }
}

fn run<S: Real>(
    model: &Model<S>,
    x: &Tensor<S>,
    cfg: &InterrogationConfig,
    bounds: &Bounds<S>,
    record: bool,
) -> Result<(Tensor<S>, Vec<S>)> {
    cfg.validate()?;
    let (indices, weights) = cfg.resolve::<S>(model.spec())?;
    let input_shape = model.spec().input_shape();
    bounds
        .min
        .expect_same_shape(&Tensor::zeros(input_shape), "interrogation bounds")?;
    let (_, raw_target) = model.forward_with_trace(x, &ids(model, &indices))?;
    let target = match &cfg.defense {
        Some(d) => d.expose(x, &raw_target)?,
        None => raw_target,
    };
    let objective = Objective {
        model,
        indices,
        weights,
        target,
        defense: cfg.defense,
    };
    let lr = S::lit(cfg.lr);
    let mut xg = initial_image(input_shape, bounds, cfg.seed)?;
    let mut state = AdamState::new(input_shape);
    let mut losses = Vec::with_capacity(if record { cfg.steps + 1 } else { 0 });
    for step in 0..cfg.steps {
        let wrap = |e: Error| Error::Interrogation {
            step,
            source: Box::new(e),
        };
        let (loss, grad) = objective.eval(&xg, true).map_err(wrap)?;
        if record {
            losses.push(loss);
        }
        let (next, next_state) = adam_step(state, &xg, &grad.expect("requested"), lr).map_err(wrap)?;
        state = next_state;
        xg = clip_values(&next, bounds, cfg.clip).map_err(wrap)?;
    }
    if record {
        let (loss, _) = objective.eval(&xg, false).map_err(|e| Error::Interrogation {
            step: cfg.steps,
            source: Box::new(e),
        })?;
        losses.push(loss);
    }
    Ok((xg, losses))
}

fn ids<S: Real>(model: &Model<S>, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&i| model.spec().layers()[i].id.clone()).collect()
}
