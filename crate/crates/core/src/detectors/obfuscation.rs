//! Activation obfuscation defense: per-tensor normalization plus Gaussian noise.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::layers::normalize_backward;
use crate::model::ActivationTrace;
use crate::scalar::Real;
use crate::seed;
use crate::tensor::Tensor;

/// Variance below which a tensor is treated as constant and normalized to zeros.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Defense settings: noise scale and the seed its noise streams derive from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obfuscation {
    pub sigma: f64,
    pub seed: u64,
}

impl Obfuscation {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("obfuscation sigma must be >= 0, got {sigma}")));
        }
        Ok(Obfuscation { sigma, seed })
    }

    /// Noise seed for the trace of input `x`. A deployed defense draws fresh
    /// noise per query; keying the stream on the input bits keeps every
    /// score a pure function of its input.
    pub fn seed_for<S: Real>(&self, x: &Tensor<S>) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for v in x.data() {
            for b in v.as_f64().to_bits().to_le_bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        seed::derive_indexed(self.seed, "obfuscation", h)
    }

    /// The trace a defended model exposes for input `x`.
    pub fn expose<S: Real>(&self, x: &Tensor<S>, trace: &ActivationTrace<S>) -> Result<ActivationTrace<S>> {
        obfuscate_trace(trace, self.sigma, self.seed_for(x))
    }
}

/// Normalizes every activation tensor to zero mean and unit variance over its
/// elements, then adds `N(0, σ²)` noise drawn from `seed`.
pub fn obfuscate_trace<S: Real>(trace: &ActivationTrace<S>, sigma: f64, seed: u64) -> Result<ActivationTrace<S>> {
    Ok(obfuscate_with_stats(trace, sigma, seed)?.0)
}

/// Per-tensor normalization statistics, kept for the backward pass.
pub(crate) struct NormStats<S> {
    layers: Vec<(Vec<S>, S)>,
}

impl<S: Real> NormStats<S> {
    /// Maps gradients with respect to the obfuscated activations back to the raw ones.
    pub(crate) fn backward(&self, index: usize, grad: &Tensor<S>) -> Tensor<S> {
        let (xhat, inv_std) = &self.layers[index];
        Tensor::from_parts(grad.shape().to_vec(), normalize_backward(xhat, *inv_std, grad.data()))
    }
}

pub(crate) fn obfuscate_with_stats<S: Real>(
    trace: &ActivationTrace<S>,
    sigma: f64,
    seed: u64,
) -> Result<(ActivationTrace<S>, NormStats<S>)> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("obfuscation sigma must be >= 0, got {sigma}")));
    }
    let mut rng = seed::rng(seed);
    let mut entries = Vec::with_capacity(trace.len());
    let mut stats = Vec::with_capacity(trace.len());
    for (id, t) in trace.iter() {
        let (xhat, inv_std) = guarded_normalize(t.data());
        let noisy = xhat
            .iter()
            .map(|&v| {
                if sigma == 0.0 {
                    v
                } else {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + S::lit(sigma * z)
                }
            })
            .collect();
        entries.push((id.to_string(), Tensor::new(t.shape().to_vec(), noisy)?));
        stats.push((xhat, inv_std));
    }
    Ok((ActivationTrace::new(entries), NormStats { layers: stats }))
}

/// `(x − mean) / std`, or all zeros with `inv_std = 0` when the variance is below the floor.
fn guarded_normalize<S: Real>(x: &[S]) -> (Vec<S>, S) {
    let n = S::from_count(x.len());
    let mean = x.iter().copied().sum::<S>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    if var < S::lit(VARIANCE_FLOOR) {
        return (vec![S::zero(); x.len()], S::zero());
    }
    let inv_std = S::one() / var.sqrt();
    (x.iter().map(|&v| (v - mean) * inv_std).collect(), inv_std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(values: &[f64]) -> ActivationTrace<f64> {
        ActivationTrace::new(vec![("a".into(), Tensor::vector(values.to_vec()).unwrap())])
    }

    #[test]
    fn standardized_trace_is_a_fixed_point_without_noise() {
        let t = trace(&[1.0, -1.0, 1.0, -1.0]);
        let out = obfuscate_trace(&t, 0.0, 5).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn constant_tensor_becomes_pure_noise() {
        let t = trace(&[3.0; 6]);
        assert!(obfuscate_trace(&t, 0.0, 1)
            .unwrap()
            .get("a")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
        let noisy = obfuscate_trace(&t, 0.5, 1).unwrap();
        assert!(noisy.get("a").unwrap().data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let t = trace(&[0.3, 1.2, -0.7, 2.0]);
        assert_eq!(
            obfuscate_trace(&t, 1.0, 9).unwrap(),
            obfuscate_trace(&t, 1.0, 9).unwrap()
        );
        assert_ne!(
            obfuscate_trace(&t, 1.0, 9).unwrap(),
            obfuscate_trace(&t, 1.0, 10).unwrap()
        );
    }

    #[test]
    fn rejects_negative_sigma() {
        assert!(obfuscate_trace(&trace(&[1.0, 2.0]), -0.1, 0).is_err());
        assert!(Obfuscation::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = Tensor::<f64>::vector(vec![0.4, -1.3, 2.2, 0.9, -0.1]).unwrap();
        let w = [0.7, -0.2, 1.1, 0.5, -0.9];
        let objective = |t: &Tensor<f64>| -> Result<f64> {
            let (out, _) = obfuscate_with_stats(&trace(t.data()), 0.3, 4)?;
            Ok(out.get("a").unwrap().data().iter().zip(&w).map(|(a, b)| a * b).sum())
        };
        let (_, stats) = obfuscate_with_stats(&trace(x.data()), 0.3, 4).unwrap();
        let analytic = stats.backward(0, &Tensor::vector(w.to_vec()).unwrap());
        let numeric = crate::gradcheck::finite_diff_oracle(objective, &x, 1e-5).unwrap();
        assert!(crate::tensor::relative_error(analytic.data(), numeric.data()) < 1e-8);
    }
}
