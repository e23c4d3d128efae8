//! Central-difference gradient oracle.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Estimates `∇f(x)` with central differences `(f(x + h e_i) − f(x − h e_i)) / 2h`.
///
/// A non-finite evaluation (or an error from `f`) is reported with the
/// coordinate being probed.
pub fn finite_diff_oracle<S, F>(f: F, x: &Tensor<S>, h: S) -> Result<Tensor<S>>
where
    S: Real,
    F: Fn(&Tensor<S>) -> Result<S>,
{
    if !(h > S::zero()) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let two_h = h + h;
    let mut grad = Vec::with_capacity(x.numel());
    for (i, &xi) in x.data().iter().enumerate() {
        let probe = |v: S| -> Result<S> {
            let value =
                f(&x.with_value(i, v)?).map_err(|e| Error::non_finite(format!("objective at coordinate {i}: {e}")))?;
            if !value.is_finite() {
                return Err(Error::non_finite(format!("objective at coordinate {i}")));
            }
            Ok(value)
        };
        grad.push((probe(xi + h)? - probe(xi - h)?) / two_h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let x = Tensor::vector(vec![3.0f64]).unwrap();
        let g = finite_diff_oracle(|t| Ok(t.data()[0] * t.data()[0]), &x, 1e-5).unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::<f64>::from_f64(vec![2, 3], &[0.1, -4.0, 2.0, 7.5, 0.0, 1.0]).unwrap();
        let g = finite_diff_oracle(|t| Ok(t.sum()), &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn non_finite_objective_names_coordinate() {
        let x = Tensor::vector(vec![1.0f64, 0.0]).unwrap();
        let err = finite_diff_oracle(|t| Ok(if t.data()[1] > 0.0 { f64::NAN } else { 0.0 }), &x, 1e-5).unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
        assert!(finite_diff_oracle(|t: &Tensor<f64>| Ok(t.sum()), &x, 0.0).is_err());
    }
}
