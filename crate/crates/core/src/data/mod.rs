//! Datasets, the member/non-member split protocol and the `MIAD` file format.

mod file;
mod split;
mod synth;

pub use file::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use split::{stratified_split, AttackSplit, SplitConfig, SplitPlan, SplitRole};
pub use synth::{synth_blobs, BlobSource};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Per-feature `[min, max]` envelope of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds<S> {
    pub min: Tensor<S>,
    pub max: Tensor<S>,
}

impl<S: Real> Bounds<S> {
    pub fn new(min: Tensor<S>, max: Tensor<S>) -> Result<Self> {
        min.expect_same_shape(&max, "bounds")?;
        if let Some(i) = min.data().iter().zip(max.data()).position(|(a, b)| a > b) {
            return Err(Error::invalid(format!("bounds have min > max at feature {i}")));
        }
        Ok(Bounds { min, max })
    }

    pub fn contains(&self, x: &Tensor<S>) -> bool {
        x.shape() == self.min.shape()
            && x.data()
                .iter()
                .zip(self.min.data().iter().zip(self.max.data()))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Labeled examples sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    xs: Vec<Tensor<S>>,
    ys: Vec<usize>,
    classes: usize,
    bounds: Bounds<S>,
}

impl<S: Real> Dataset<S> {
    pub fn new(xs: Vec<Tensor<S>>, ys: Vec<usize>, classes: usize) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if xs.len() != ys.len() {
            return Err(Error::invalid(format!("{} inputs but {} labels", xs.len(), ys.len())));
        }
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        let shape = xs[0].shape().to_vec();
        if let Some(i) = xs.iter().position(|x| x.shape() != shape.as_slice()) {
            return Err(Error::shape(format!("dataset example {i}"), &shape, xs[i].shape()));
        }
        if let Some(i) = ys.iter().position(|&y| y >= classes) {
            return Err(Error::invalid(format!("label {} of example {i} >= {classes}", ys[i])));
        }
        let bounds = scan_bounds(&xs);
        Ok(Dataset {
            xs,
            ys,
            classes,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn shape(&self) -> &[usize] {
        self.xs[0].shape()
    }

    pub fn x(&self, id: usize) -> &Tensor<S> {
        &self.xs[id]
    }

    pub fn y(&self, id: usize) -> usize {
        self.ys[id]
    }

    pub fn labels(&self) -> &[usize] {
        &self.ys
    }

    pub fn inputs(&self) -> &[Tensor<S>] {
        &self.xs
    }

    pub fn bounds(&self) -> &Bounds<S> {
        &self.bounds
    }

    /// Ids of each class, in ascending order.
    pub fn ids_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.classes];
        for (id, &y) in self.ys.iter().enumerate() {
            by_class[y].push(id);
        }
        by_class
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.len()) {
            Some(id) => Err(Error::invalid(format!(
                "example id {id} out of range for {} examples",
                self.len()
            ))),
            None => Ok(()),
        }
    }
}

fn scan_bounds<S: Real>(xs: &[Tensor<S>]) -> Bounds<S> {
    let mut min = xs[0].clone();
    let mut max = xs[0].clone();
    for x in &xs[1..] {
        for ((lo, hi), &v) in min.data_mut().iter_mut().zip(max.data_mut().iter_mut()).zip(x.data()) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
    Bounds { min, max }
}

/// Tight per-feature bounds: every bound is attained by some example.
pub fn empirical_bounds<S: Real>(ds: &Dataset<S>) -> Bounds<S> {
    ds.bounds.clone()
}

/// Horizontal mirror of a `[C, H, W]` image when `apply`, identity otherwise.
pub fn augment_flip<S: Real>(x: &Tensor<S>, apply: bool) -> Result<Tensor<S>> {
    let [c, h, w] = match *x.shape() {
        [c, h, w] => [c, h, w],
        _ => return Err(Error::shape("augment_flip", "[C, H, W]", x.shape())),
    };
    if !apply {
        return Ok(x.clone());
    }
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for row in 0..c * h {
        out.extend(src[row * w..(row + 1) * w].iter().rev());
    }
    Tensor::new(vec![c, h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: &[&[f64]], ys: &[usize]) -> Dataset<f64> {
        let xs = rows.iter().map(|r| Tensor::vector(r.to_vec()).unwrap()).collect();
        Dataset::new(xs, ys.to_vec(), 2).unwrap()
    }

    #[test]
    fn bounds_by_inspection() {
        let d = ds(&[&[0.0, 1.0], &[2.0, -1.0]], &[0, 1]);
        let b = empirical_bounds(&d);
        assert_eq!(b.min.data(), &[0.0, -1.0]);
        assert_eq!(b.max.data(), &[2.0, 1.0]);
        let single = ds(&[&[3.0, 4.0]], &[1]);
        let b = empirical_bounds(&single);
        assert_eq!(b.min, b.max);
    }

    #[test]
    fn dataset_validation() {
        let a = Tensor::vector(vec![1.0f64]).unwrap();
        let b = Tensor::vector(vec![1.0f64, 2.0]).unwrap();
        assert!(Dataset::new(vec![a.clone(), b], vec![0, 1], 2).is_err());
        assert!(Dataset::new(vec![a.clone()], vec![2], 2).is_err());
        assert!(Dataset::<f64>::new(vec![], vec![], 2).is_err());
    }

    #[test]
    fn flip_mirrors_rows() {
        let x = Tensor::<f64>::from_f64(vec![1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(augment_flip(&x, true).unwrap().data(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(augment_flip(&x, false).unwrap(), x);
        let v = Tensor::<f64>::vector(vec![1.0, 2.0]).unwrap();
        assert!(augment_flip(&v, true).is_err());
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(c in 1usize..3, h in 1usize..5, w in 1usize..5, seed in 0u64..1000) {
            let data: Vec<f64> = (0..c * h * w).map(|i| ((i as u64 * 31 + seed) % 17) as f64).collect();
            let x = Tensor::new(vec![c, h, w], data).unwrap();
            let twice = augment_flip(&augment_flip(&x, true).unwrap(), true).unwrap();
            prop_assert_eq!(twice, x);
        }

        #[test]
        fn bounds_envelop_and_are_attained(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 1..40)) {
            let xs: Vec<_> = rows.iter().map(|r| Tensor::vector(r.clone()).unwrap()).collect();
            let ys = vec![0; xs.len()];
            let d = Dataset::new(xs, ys, 2).unwrap();
            let b = empirical_bounds(&d);
            for f in 0..3 {
                prop_assert!(rows.iter().all(|r| b.min.data()[f] <= r[f] && r[f] <= b.max.data()[f]));
                prop_assert!(rows.iter().any(|r| r[f] == b.min.data()[f]));
                prop_assert!(rows.iter().any(|r| r[f] == b.max.data()[f]));
            }
        }
    }
}
