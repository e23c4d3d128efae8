//! Adversarial-distance detector: how far a query must move before the
//! model changes its mind. Members sit deeper inside their class region.

use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaeqConfig {
    /// Per-coordinate signed-gradient step.
    pub step: f64,
    /// Maximum number of steps.
    pub budget: usize,
}

impl Default for LaeqConfig {
    fn default() -> Self {
        LaeqConfig {
            step: 0.02,
            budget: 100,
        }
    }
}

impl LaeqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::invalid(format!("LAEQ step must be positive, got {}", self.step)));
        }
        if self.budget == 0 {
            return Err(Error::invalid("LAEQ budget must be >= 1"));
        }
        Ok(())
    }

    /// Score reported when the budget runs out without a label flip: the
    /// largest `‖δ‖₂` the budget can reach.
    pub fn sentinel(&self, dim: usize) -> f64 {
        self.budget as f64 * self.step * (dim as f64).sqrt()
    }
}

/// `‖δ‖₂` at the first misclassification along signed-gradient ascent of the
/// loss; 0 for an initially misclassified query.
pub fn laeq_score<S: Real>(model: &Model<S>, x: &Tensor<S>, y: usize, cfg: &LaeqConfig) -> Result<f64> {
    cfg.validate()?;
    if model.predict(x)? != y {
        return Ok(0.0);
    }
    let step = S::lit(cfg.step);
    let mut delta = Tensor::zeros(x.shape());
    for _ in 0..cfg.budget {
        let probe = x.add(&delta)?;
        let (_, grads) = model.loss_grad(&probe, y, false)?;
        delta = delta.zip_map(&grads.input, |d, g| d + step * sign(g))?;
        if model.predict(&x.add(&delta)?)? != y {
            return Ok(delta.norm().as_f64());
        }
    }
    Ok(cfg.sentinel(x.numel()))
}

fn sign<S: Real>(v: S) -> S {
    if v > S::zero() {
        S::one()
    } else if v < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}
