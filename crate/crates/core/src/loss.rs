//! Softmax cross-entropy and the logistic helpers used by the meta-classifier.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Numerically stable softmax.
pub fn softmax<S: Real>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy `−log softmax(logits)[y]` and its gradient `softmax − onehot(y)`.
pub fn cross_entropy<S: Real>(logits: &Tensor<S>, y: usize) -> Result<(S, Tensor<S>)> {
    let z = logits.data();
    if logits.shape().len() != 1 {
        return Err(Error::shape("cross-entropy", "[C]", logits.shape()));
    }
    if y >= z.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            z.len()
        )));
    }
    let max = z.iter().copied().fold(S::neg_infinity(), S::max);
    let log_total = z.iter().map(|&v| (v - max).exp()).sum::<S>().ln() + max;
    let loss = log_total - z[y];
    let mut grad: Vec<S> = z.iter().map(|&v| (v - log_total).exp()).collect();
    grad[y] -= S::one();
    if !loss.is_finite() {
        return Err(Error::non_finite("cross-entropy"));
    }
    Ok((loss.max(S::zero()), Tensor::from_parts(vec![z.len()], grad)))
}

pub fn sigmoid<S: Real>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// Binary cross-entropy on a logit, with its derivative `σ(z) − target`.
pub fn logistic_loss<S: Real>(z: S, target: bool) -> (S, S) {
    // log(1 + e^{-|z|}) + max(z, 0) - z·t
    let t = if target { S::one() } else { S::zero() };
    let loss = (S::one() + (-z.abs()).exp()).ln() + z.max(S::zero()) - z * t;
    (loss, sigmoid(z) - t)
}
