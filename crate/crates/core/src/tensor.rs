//! Dense row-major tensors.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense n-dimensional array with positive extents and finite values.
///
/// The two invariants (`data.len() == shape.iter().product()` and every
/// value finite) are checked on every public constructor; internal code that
/// mutates values in place re-checks with [`Tensor::ensure_finite`] at layer
/// boundaries.
#[derive(Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "tensor of shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("tensor construction (index {i})")));
        }
        Ok(Tensor { shape, data })
    }

    /// One-dimensional tensor.
    pub fn vector(data: Vec<S>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| S::lit(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Wraps data whose length is already known to match; finiteness is not checked.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor { shape, data: self.data })
    }

    /// Copy with one coordinate replaced. Used by finite-difference probes.
    pub fn with_value(&self, index: usize, value: S) -> Result<Self> {
        if index >= self.data.len() {
            return Err(Error::invalid(format!(
                "index {index} out of range for {} values",
                self.data.len()
            )));
        }
        if !value.is_finite() {
            return Err(Error::non_finite(format!("coordinate {index}")));
        }
        let mut out = self.clone();
        out.data[index] = value;
        Ok(out)
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::non_finite(format!("{context} (index {i})"))),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two tensors of identical shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        self.expect_same_shape(other, "dot")?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> S {
        dot(&self.data, &self.data).sqrt()
    }

    /// Index of the largest value; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate().skip(1) {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }

    pub(crate) fn expect_same_shape(&self, other: &Self, context: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(context, &self.shape, &other.shape));
        }
        Ok(())
    }
}

impl<S: fmt::Debug> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::invalid(format!(
            "tensor extents must be positive, got {shape:?}"
        )));
    }
    Ok(())
}

pub(crate) fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error<S: Real>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len(), "relative_error: length mismatch");
    let diff: S = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>().sqrt();
    let scale = dot(a, a).sqrt().max(dot(b, b).sqrt());
    if scale == S::zero() {
        diff
    } else {
        diff / scale
    }
}
