//! Bias-corrected Adam on a single tensor.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: Tensor<S>,
    pub v: Tensor<S>,
    pub t: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }
}

/// One Adam update of `x` against `grad` (no weight decay).
pub fn adam_step<S: Real>(
    state: AdamState<S>,
    x: &Tensor<S>,
    grad: &Tensor<S>,
    lr: S,
) -> Result<(Tensor<S>, AdamState<S>)> {
    x.expect_same_shape(grad, "adam gradient")?;
    x.expect_same_shape(&state.m, "adam state")?;
    grad.ensure_finite("adam gradient")?;
    if !lr.is_finite() {
        return Err(Error::non_finite("adam learning rate"));
    }
    let (b1, b2, eps) = (S::lit(BETA1), S::lit(BETA2), S::lit(EPSILON));
    let AdamState { mut m, mut v, t } = state;
    let t = t + 1;
    let c1 = S::one() - b1.powi(t.min(i32::MAX as u64) as i32);
    let c2 = S::one() - b2.powi(t.min(i32::MAX as u64) as i32);
    let mut out = x.clone();
    for (((xv, &g), mv), vv) in out
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        *mv = b1 * *mv + (S::one() - b1) * g;
        *vv = b2 * *vv + (S::one() - b2) * g * g;
        let m_hat = *mv / c1;
        let v_hat = *vv / c2;
        *xv -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    out.ensure_finite("adam update")?;
    Ok((out, AdamState { m, v, t }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::vector(v.to_vec()).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        let x = t(&[0.0, 1.0, -2.0]);
        let g = t(&[3.0, -0.5, 1e-2]);
        let (next, state) = adam_step(AdamState::new(&[3]), &x, &g, 0.1).unwrap();
        assert_eq!(state.t, 1);
        for ((a, b), gv) in next.data().iter().zip(x.data()).zip(g.data()) {
            let step = b - a;
            assert!((step - 0.1 * gv.signum()).abs() < 1e-6 * 0.1 / gv.abs() + 1e-12);
        }
    }

    #[test]
    fn zero_gradient_leaves_input() {
        let x = t(&[0.5, -0.25]);
        let (next, _) = adam_step(AdamState::new(&[2]), &x, &t(&[0.0, 0.0]), 0.2).unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn displacement_is_linear_in_lr() {
        let x = t(&[0.0, 0.0]);
        let g = t(&[0.7, -1.3]);
        let (a, _) = adam_step(AdamState::new(&[2]), &x, &g, 0.05).unwrap();
        let (b, _) = adam_step(AdamState::new(&[2]), &x, &g, 0.1).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((2.0 * p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_gradients() {
        let x = t(&[0.0, 0.0]);
        assert!(adam_step(AdamState::new(&[2]), &x, &t(&[1.0]), 0.1).is_err());
        let bad = Tensor::from_parts(vec![2], vec![f64::NAN, 0.0]);
        assert!(adam_step(AdamState::new(&[2]), &x, &bad, 0.1).is_err());
    }
}
