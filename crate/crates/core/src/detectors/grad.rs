//! Parameter-gradient features.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Real;
use crate::seed;
use crate::tensor::Tensor;

/// Sorted, seeded sample of `d_sub` distinct parameter indices out of `num_params`.
pub fn subsample_indices(num_params: usize, d_sub: usize, seed: u64) -> Result<Vec<usize>> {
    if d_sub == 0 || d_sub > num_params {
        return Err(Error::invalid(format!(
            "gradient subsample of {d_sub} out of {num_params} parameters"
        )));
    }
    let mut rng = seed::rng(seed::derive(seed, "grad-subsample"));
    let mut idx = index::sample(&mut rng, num_params, d_sub).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Full flattened `∇θ CE(f(x), y)`.
pub fn param_gradient<S: Real>(model: &Model<S>, x: &Tensor<S>, y: usize) -> Result<Vec<S>> {
    let (_, grads) = model.loss_grad(x, y, true)?;
    Ok(grads.params.expect("requested").flatten())
}

/// `∇θ CE(f(x), y)` gathered at `indices`.
pub fn grad_feature<S: Real>(model: &Model<S>, x: &Tensor<S>, y: usize, indices: &[usize]) -> Result<Vec<f64>> {
    let n = model.spec().num_params();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::invalid(format!(
            "parameter index {bad} out of range for {n} parameters"
        )));
    }
    let full = param_gradient(model, x, y)?;
    Ok(indices.iter().map(|&i| full[i].as_f64()).collect())
}
