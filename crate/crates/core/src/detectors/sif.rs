//! Self-influence detector: `−gᵀ H̃⁻¹ g` with the inverse-Hessian product
//! approximated by one damped LiSSA recursion refined by one conjugate
//! gradient iteration.

use super::grad::{param_gradient, subsample_indices};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Score given to misclassified queries; strictly below every other score.
pub const MISCLASSIFIED: f64 = f64::MIN;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SifConfig {
    /// Added to the Hessian diagonal.
    pub damping: f64,
    /// Parameter coordinates used; `None` means all.
    pub d_sub: Option<usize>,
    /// Finite-difference radius of Hessian-vector products.
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for SifConfig {
    fn default() -> Self {
        SifConfig {
            damping: 0.01,
            d_sub: None,
            fd_step: 1e-4,
            seed: 0,
        }
    }
}

impl SifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(Error::invalid(format!(
                "SIF damping must be >= 0, got {}",
                self.damping
            )));
        }
        if !(self.fd_step > 0.0) || !self.fd_step.is_finite() {
            return Err(Error::invalid("SIF finite-difference step must be positive"));
        }
        if self.d_sub == Some(0) {
            return Err(Error::invalid("SIF d_sub must be positive"));
        }
        Ok(())
    }
}

/// Detector state: configuration plus the fixed coordinate subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Sif {
    pub cfg: SifConfig,
    indices: Vec<usize>,
}

impl Sif {
    pub fn new<S: Real>(model: &Model<S>, cfg: SifConfig) -> Result<Self> {
        cfg.validate()?;
        let n = model.spec().num_params();
        let indices = match cfg.d_sub {
            Some(d) if d < n => subsample_indices(n, d, cfg.seed)?,
            _ => (0..n).collect(),
        };
        Ok(Sif { cfg, indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn score<S: Real>(&self, model: &Model<S>, x: &Tensor<S>, y: usize) -> Result<f64> {
        if model.predict(x)? != y {
            return Ok(MISCLASSIFIED);
        }
        let full = param_gradient(model, x, y)?;
        let g: Vec<f64> = self.indices.iter().map(|&i| full[i].as_f64()).collect();
        let hvp = |v: &[f64]| -> Result<Vec<f64>> {
            let hv = hessian_vector(model, x, y, &self.indices, v, self.cfg.fd_step)?;
            Ok(hv.iter().zip(v).map(|(h, vi)| h + self.cfg.damping * vi).collect())
        };
        let solution = lissa_cg(&g, hvp)?;
        let s = -dot(&g, &solution);
        if !s.is_finite() {
            return Err(Error::non_finite("self-influence"));
        }
        Ok(s.max(MISCLASSIFIED.next_up()))
    }
}

/// Approximates `A⁻¹ g` for the operator `apply = A`: one LiSSA step
/// `v₁ = g + (I − A) g`, then one conjugate-gradient iteration on `A x = g`
/// started from `v₁`.
pub fn lissa_cg(g: &[f64], apply: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let ag = checked(apply(g)?, g.len())?;
    let x0: Vec<f64> = g.iter().zip(&ag).map(|(gi, ai)| 2.0 * gi - ai).collect();
    let ax0 = checked(apply(&x0)?, g.len())?;
    let r0: Vec<f64> = g.iter().zip(&ax0).map(|(gi, ai)| gi - ai).collect();
    let rr = dot(&r0, &r0);
    if rr == 0.0 {
        return Ok(x0);
    }
    let ap = checked(apply(&r0)?, g.len())?;
    let curvature = dot(&r0, &ap);
    if !(curvature > 0.0) {
        // Negative curvature along the residual: CG is undefined, keep the LiSSA iterate.
        return Ok(x0);
    }
    let alpha = rr / curvature;
    Ok(x0.iter().zip(&r0).map(|(x, r)| x + alpha * r).collect())
}

fn checked(v: Vec<f64>, len: usize) -> Result<Vec<f64>> {
    if v.len() != len {
        return Err(Error::invalid(format!(
            "operator returned {} values, expected {len}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite("curvature product"));
    }
    Ok(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `H v` restricted to `indices`, by central differences of the loss gradient
/// along the unit direction of `v`.
fn hessian_vector<S: Real>(
    model: &Model<S>,
    x: &Tensor<S>,
    y: usize,
    indices: &[usize],
    v: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    if norm == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let base = model.params().flatten();
    let shifted = |sign: f64| -> Result<Vec<f64>> {
        let mut theta = base.clone();
        for (&i, &vi) in indices.iter().zip(v) {
            theta[i] += S::lit(sign * h * vi / norm);
        }
        let m = model.with_params(model.params().unflatten(&theta)?)?;
        let g = param_gradient(&m, x, y)?;
        Ok(indices.iter().map(|&i| g[i].as_f64()).collect())
    };
    let plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| norm * (p - m) / (2.0 * h))
        .collect())
}
