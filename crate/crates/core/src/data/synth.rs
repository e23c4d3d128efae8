//! Gaussian class clusters standing in for an image dataset.

use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed;
use crate::tensor::Tensor;

/// Class-mean generator. Examples of class `c` are
/// `(μ_c + spread · z) / sqrt(1 + spread²)` with `μ_c, z ~ N(0, I)`, so every
/// feature has unit marginal variance whatever the overlap. Values are
/// rounded to `f32` so datasets survive a `MIAD` round trip bit-for-bit.
#[derive(Debug, Clone)]
pub struct BlobSource {
    shape: Vec<usize>,
    spread: f64,
    means: Vec<Vec<f64>>,
}

impl BlobSource {
    /// Class means are fixed by `seed`; the same source can then emit several
    /// independent samples (target data, shadow data) from one distribution.
    pub fn new(classes: usize, shape: &[usize], spread: f64, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        if !(spread > 0.0) || !spread.is_finite() {
            return Err(Error::invalid(format!("spread must be positive, got {spread}")));
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!("bad example shape {shape:?}")));
        }
        let dim: usize = shape.iter().product();
        let mut rng = seed::rng(seed::derive(seed, "blob-means"));
        let means = (0..classes)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Ok(BlobSource {
            shape: shape.to_vec(),
            spread,
            means,
        })
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    /// `per_class` examples of every class, class-major order.
    pub fn sample<S: Real>(&self, per_class: usize, seed: u64) -> Result<Dataset<S>> {
        if per_class < 10 {
            return Err(Error::invalid(format!("per_class must be >= 10, got {per_class}")));
        }
        let mut rng = seed::rng(seed::derive(seed, "blob-samples"));
        let norm = (1.0 + self.spread * self.spread).sqrt();
        let mut xs = Vec::with_capacity(per_class * self.classes());
        let mut ys = Vec::with_capacity(xs.capacity());
        for (class, mean) in self.means.iter().enumerate() {
            for _ in 0..per_class {
                let data = mean
                    .iter()
                    .map(|&m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        S::lit(((m + self.spread * z) / norm) as f32 as f64)
                    })
                    .collect();
                xs.push(Tensor::new(self.shape.clone(), data)?);
                ys.push(class);
            }
        }
        Dataset::new(xs, ys, self.classes())
    }
}

/// Seeded Gaussian-blob dataset with exactly `per_class` examples per class.
pub fn synth_blobs<S: Real>(
    classes: usize,
    per_class: usize,
    shape: &[usize],
    spread: f64,
    seed: u64,
) -> Result<Dataset<S>> {
    BlobSource::new(classes, shape, spread, seed)?.sample(per_class, seed)
}
