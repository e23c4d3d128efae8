//! Layer-stack models: declaration, parameters, traced forward passes and
//! reverse-mode backward passes.

mod checkpoint;
mod groups;
mod zoo;

use std::collections::HashSet;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use groups::{layer_groups, GroupName, LayerGroup};
pub use zoo::{architecture_spec, build_model, init_params, Architecture, MLP_HIDDEN};

use crate::error::{Error, Result};
use crate::layers::{apply_layer, backward_layer, LayerKind};
use crate::loss::cross_entropy;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub id: String,
    pub kind: LayerKind,
}

/// Ordered layer stack with its input shape and class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    classes: usize,
    /// Output shape of every layer.
    shapes: Vec<Vec<usize>>,
}

impl ModelSpec {
    pub fn new(layers: Vec<Layer>, input_shape: Vec<usize>, classes: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("model needs at least one layer"));
        }
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::invalid(format!("bad input shape {input_shape:?}")));
        }
        let mut seen = HashSet::new();
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for layer in &layers {
            if !seen.insert(layer.id.as_str()) {
                return Err(Error::invalid(format!("duplicate layer id `{}`", layer.id)));
            }
            layer.kind.validate(&layer.id)?;
            current = layer.kind.output_shape(&layer.id, &current)?;
            shapes.push(current.clone());
        }
        if current != [classes] {
            return Err(Error::shape("model output", [classes], &current));
        }
        Ok(ModelSpec {
            layers,
            input_shape,
            classes,
            shapes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn output_shape(&self, index: usize) -> &[usize] {
        &self.shapes[index]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| Error::UnknownLayer(id.to_string()))
    }

    /// Indices of layers that own parameters, in depth order.
    pub fn parametric_indices(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].kind.is_parametric())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.kind.param_shapes())
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// Per-layer parameter tensors aligned with a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<S> {
    layers: Vec<Vec<Tensor<S>>>,
}

impl<S: Real> ParamSet<S> {
    pub fn zeros(spec: &ModelSpec) -> Self {
        ParamSet {
            layers: spec
                .layers
                .iter()
                .map(|l| l.kind.param_shapes().iter().map(|s| Tensor::zeros(s)).collect())
                .collect(),
        }
    }

    pub fn from_layers(spec: &ModelSpec, layers: Vec<Vec<Tensor<S>>>) -> Result<Self> {
        let ps = ParamSet { layers };
        ps.check_against(spec)?;
        Ok(ps)
    }

    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::invalid(format!(
                "parameter set has {} layers, model has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (layer, tensors) in spec.layers.iter().zip(&self.layers) {
            let expected = layer.kind.param_shapes();
            let actual: Vec<&[usize]> = tensors.iter().map(|t| t.shape()).collect();
            if expected.len() != actual.len() || expected.iter().zip(&actual).any(|(e, a)| e.as_slice() != *a) {
                return Err(Error::shape(format!("{} (parameters)", layer.id), expected, actual));
            }
        }
        Ok(())
    }

    pub fn layer(&self, index: usize) -> &[Tensor<S>] {
        &self.layers[index]
    }

    pub(crate) fn layer_mut(&mut self, index: usize) -> &mut Vec<Tensor<S>> {
        &mut self.layers[index]
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<S>> {
        self.layers.iter().flatten()
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<S>> {
        self.layers.iter_mut().flatten()
    }

    pub fn len(&self) -> usize {
        self.tensors().map(|t| t.numel()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All parameters concatenated in declaration order (layer, then weight before bias).
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.len());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Same structure as `self`, values taken from `flat` in declaration order.
    pub fn unflatten(&self, flat: &[S]) -> Result<Self> {
        if flat.len() != self.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.len(),
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for tensors in &self.layers {
            let mut out = Vec::with_capacity(tensors.len());
            for t in tensors {
                let n = t.numel();
                out.push(Tensor::new(t.shape().to_vec(), flat[offset..offset + n].to_vec())?);
                offset += n;
            }
            layers.push(out);
        }
        Ok(ParamSet { layers })
    }

    pub fn cast<T: Real>(&self) -> ParamSet<T> {
        ParamSet {
            layers: self
                .layers
                .iter()
                .map(|ts| ts.iter().map(|t| t.cast()).collect())
                .collect(),
        }
    }
}

/// Captured post-layer activations for one input, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace<S> {
    entries: Vec<(String, Tensor<S>)>,
}

impl<S: Real> ActivationTrace<S> {
    pub fn new(entries: Vec<(String, Tensor<S>)>) -> Self {
        ActivationTrace { entries }
    }

    pub fn get(&self, id: &str) -> Option<&Tensor<S>> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, t)| t)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(k, t)| (k.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<(String, Tensor<S>)> {
        self.entries
    }
}

/// Inputs to every layer plus the final output, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    /// `values[i]` is the input of layer `i`; the last entry is the model output.
    values: Vec<Tensor<S>>,
}

impl<S: Real> ForwardCache<S> {
    pub fn input(&self) -> &Tensor<S> {
        &self.values[0]
    }

    pub fn logits(&self) -> &Tensor<S> {
        self.values.last().expect("cache holds at least the input")
    }

    /// Output of layer `index`.
    pub fn output(&self, index: usize) -> &Tensor<S> {
        &self.values[index + 1]
    }
}

/// Input and parameter gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    pub input: Tensor<S>,
    /// `None` when parameter gradients were not requested.
    pub params: Option<ParamSet<S>>,
}

/// A model specification together with trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    spec: ModelSpec,
    params: ParamSet<S>,
}

impl<S: Real> Model<S> {
    pub fn new(spec: ModelSpec, params: ParamSet<S>) -> Result<Self> {
        params.check_against(&spec)?;
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamSet<S>) -> Result<Self> {
        Model::new(self.spec.clone(), params)
    }

    pub fn into_parts(self) -> (ModelSpec, ParamSet<S>) {
        (self.spec, self.params)
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.shape() != self.spec.input_shape() {
            return Err(Error::shape("model input", self.spec.input_shape(), x.shape()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        let mut current = x.clone();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            current = apply_layer(&layer.id, &layer.kind, self.params.layer(i), &current)?;
        }
        Ok(current)
    }

    pub fn predict(&self, x: &Tensor<S>) -> Result<usize> {
        Ok(self.forward(x)?.argmax())
    }

    /// Forward pass that keeps every intermediate value for [`Model::backward`].
    pub fn forward_cache(&self, x: &Tensor<S>) -> Result<ForwardCache<S>> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.spec.layers.len() + 1);
        values.push(x.clone());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let next = apply_layer(&layer.id, &layer.kind, self.params.layer(i), &values[i])?;
            values.push(next);
        }
        Ok(ForwardCache { values })
    }

    /// Forward pass returning the logits and the activations of the `capture` layers.
    pub fn forward_with_trace<I: AsRef<str>>(
        &self,
        x: &Tensor<S>,
        capture: &[I],
    ) -> Result<(Tensor<S>, ActivationTrace<S>)> {
        let indices = self.capture_indices(capture)?;
        let cache = self.forward_cache(x)?;
        let trace = self.trace_from_cache(&cache, &indices);
        let ForwardCache { mut values } = cache;
        Ok((values.pop().expect("non-empty"), trace))
    }

    /// Resolves layer ids to sorted, de-duplicated layer indices.
    pub fn capture_indices<I: AsRef<str>>(&self, capture: &[I]) -> Result<Vec<usize>> {
        let mut indices = capture
            .iter()
            .map(|id| self.spec.index_of(id.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        indices.sort_unstable();
        indices.dedup();
        Ok(indices)
    }

    pub fn trace_from_cache(&self, cache: &ForwardCache<S>, indices: &[usize]) -> ActivationTrace<S> {
        ActivationTrace::new(
            indices
                .iter()
                .map(|&i| (self.spec.layers[i].id.clone(), cache.output(i).clone()))
                .collect(),
        )
    }

    /// Reverse-mode pass with upstream gradients injected at the outputs of
    /// one or more layers (`(layer index, dL/d output)`). Contributions from
    /// several cuts are summed.
    pub fn backward(
        &self,
        cache: &ForwardCache<S>,
        injections: &[(usize, Tensor<S>)],
        want_params: bool,
    ) -> Result<Gradients<S>> {
        let n = self.spec.layers.len();
        let mut pending: Vec<Option<Tensor<S>>> = vec![None; n];
        for (index, grad) in injections {
            let layer = self
                .spec
                .layers
                .get(*index)
                .ok_or_else(|| Error::invalid(format!("no layer at index {index}")))?;
            if grad.shape() != self.spec.output_shape(*index) {
                return Err(Error::shape(
                    format!("{} (upstream)", layer.id),
                    self.spec.output_shape(*index),
                    grad.shape(),
                ));
            }
            grad.ensure_finite(&format!("upstream gradient at `{}`", layer.id))?;
            pending[*index] = Some(match pending[*index].take() {
                Some(prev) => prev.add(grad)?,
                None => grad.clone(),
            });
        }
        let mut grad_params = want_params.then(|| ParamSet::zeros(&self.spec));
        let top = pending.iter().rposition(Option::is_some);
        let mut carry: Option<Tensor<S>> = None;
        if let Some(top) = top {
            for i in (0..=top).rev() {
                let grad_out = match (carry.take(), pending[i].take()) {
                    (Some(a), Some(b)) => a.add(&b)?,
                    (Some(a), None) | (None, Some(a)) => a,
                    (None, None) => unreachable!("gradient flows from the top cut"),
                };
                let layer = &self.spec.layers[i];
                let (gin, gparams) = backward_layer(
                    &layer.id,
                    &layer.kind,
                    self.params.layer(i),
                    &cache.values[i],
                    &grad_out,
                    want_params,
                )?;
                if let Some(gp) = grad_params.as_mut() {
                    if !gparams.is_empty() {
                        *gp.layer_mut(i) = gparams;
                    }
                }
                carry = Some(gin);
            }
        }
        Ok(Gradients {
            input: carry.unwrap_or_else(|| Tensor::zeros(self.spec.input_shape())),
            params: grad_params,
        })
    }

    /// Exact `(∇x, ∇θ)` of the scalar `⟨upstream, output of layer cut⟩`.
    pub fn backprop(&self, x: &Tensor<S>, cut: &str, upstream: &Tensor<S>) -> Result<(Tensor<S>, ParamSet<S>)> {
        let index = self.spec.index_of(cut)?;
        let cache = self.forward_cache(x)?;
        let grads = self.backward(&cache, &[(index, upstream.clone())], true)?;
        Ok((grads.input, grads.params.expect("requested")))
    }

    /// Cross-entropy loss at `(x, y)` and its gradients.
    pub fn loss_grad(&self, x: &Tensor<S>, y: usize, want_params: bool) -> Result<(S, Gradients<S>)> {
        let cache = self.forward_cache(x)?;
        let (loss, grad_logits) = cross_entropy(cache.logits(), y)?;
        let last = self.spec.layers.len() - 1;
        let grads = self.backward(&cache, &[(last, grad_logits)], want_params)?;
        Ok((loss, grads))
    }

    pub fn loss(&self, x: &Tensor<S>, y: usize) -> Result<S> {
        Ok(cross_entropy(&self.forward(x)?, y)?.0)
    }
}
