//! Gradient likelihood-ratio detector.
//!
//! Member and non-member gradient features are modelled as Gaussians with
//! means `μ1`, `μ0` and a shared covariance `Σ`. The score is the
//! log-likelihood ratio `Λ(g) = (g − ½(μ0 + μ1))ᵀ Σ⁻¹ (μ1 − μ0)`.

use nalgebra::{DMatrix, DVector};

use super::grad::{grad_feature, subsample_indices};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Upper bound on the gradient subsample size.
pub const MAX_D_SUB: usize = 5000;
/// Default ridge, relative to the mean covariance diagonal.
pub const RIDGE_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlirMode {
    /// Closed-form linear log-likelihood ratio.
    #[default]
    Linear,
    /// Experimental: normal approximation to the (non-central) χ² law of
    /// `Q = (g − μ0)ᵀ Σ⁻¹ (g − μ0)` under each hypothesis; the score is the
    /// log-density ratio of `Q`.
    ChiSquare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlirConfig {
    /// Gradient coordinates kept; `None` means `min(MAX_D_SUB, |θ|)`.
    pub d_sub: Option<usize>,
    /// Ridge added to the pooled covariance; `None` means `RIDGE_SCALE · tr(Σ)/d`.
    pub ridge: Option<f64>,
    pub mode: GlirMode,
    pub seed: u64,
}

impl Default for GlirConfig {
    fn default() -> Self {
        GlirConfig {
            d_sub: None,
            ridge: None,
            mode: GlirMode::Linear,
            seed: 0,
        }
    }
}

impl GlirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_sub == Some(0) {
            return Err(Error::invalid("GLiR d_sub must be positive"));
        }
        if let Some(r) = self.ridge {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::invalid(format!("GLiR ridge must be >= 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// Fitted Gaussian hypothesis pair.
#[derive(Debug, Clone)]
pub struct GlirModel {
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    /// `Σ⁻¹ (μ1 − μ0)` with the ridge included.
    w: Vec<f64>,
    ridge: f64,
    indices: Vec<usize>,
    mode: GlirMode,
    /// Lower Cholesky factor of `Σ + τI`, kept for the χ² mode.
    factor: DMatrix<f64>,
    /// `(μ1 − μ0)ᵀ w`.
    separation: f64,
}

impl GlirModel {
    /// Builds the detector from known moments. `cov` is row-major `d × d`;
    /// `ridge` is added to its diagonal before solving.
    pub fn from_moments(
        mu0: Vec<f64>,
        mu1: Vec<f64>,
        cov: &[f64],
        ridge: f64,
        indices: Vec<usize>,
        mode: GlirMode,
    ) -> Result<Self> {
        let d = mu0.len();
        if d == 0 || mu1.len() != d || cov.len() != d * d {
            return Err(Error::invalid(format!(
                "GLiR moments of sizes {}, {}, {} do not describe one dimension",
                mu0.len(),
                mu1.len(),
                cov.len()
            )));
        }
        if indices.len() != d {
            return Err(Error::invalid(format!("{} indices for dimension {d}", indices.len())));
        }
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::invalid(format!("GLiR ridge must be >= 0, got {ridge}")));
        }
        if mu0.iter().chain(&mu1).chain(cov).any(|v| !v.is_finite()) {
            return Err(Error::non_finite("GLiR moments"));
        }
        let sigma = DMatrix::from_row_slice(d, d, cov) + DMatrix::identity(d, d) * ridge;
        let chol = match sigma.clone().cholesky() {
            Some(c) => c,
            None => {
                return Err(Error::Singular {
                    condition: condition_estimate(&sigma),
                })
            }
        };
        let factor = chol.l();
        if factor.diagonal().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Singular {
                condition: condition_estimate(&sigma),
            });
        }
        let diff = DVector::from_iterator(d, mu1.iter().zip(&mu0).map(|(a, b)| a - b));
        let w = chol.solve(&diff);
        let separation = diff.dot(&w);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular {
                condition: condition_estimate(&sigma),
            });
        }
        Ok(GlirModel {
            mu0,
            mu1,
            w: w.iter().copied().collect(),
            ridge,
            indices,
            mode,
            factor,
            separation,
        })
    }

    /// Fits means and pooled covariance to member and non-member features.
    pub fn fit_features(
        members: &[Vec<f64>],
        nonmembers: &[Vec<f64>],
        ridge: Option<f64>,
        indices: Vec<usize>,
        mode: GlirMode,
    ) -> Result<Self> {
        let (mu1, mu0, cov) = pooled_moments(members, nonmembers)?;
        let d = mu0.len();
        let ridge = ridge.unwrap_or_else(|| {
            let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
            RIDGE_SCALE * trace / d as f64
        });
        Self::from_moments(mu0, mu1, &cov, ridge, indices, mode)
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn mu1(&self) -> &[f64] {
        &self.mu1
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn mode(&self) -> GlirMode {
        self.mode
    }

    /// Score of a gradient feature; higher is more member-like.
    pub fn score_feature(&self, g: &[f64]) -> Result<f64> {
        if g.len() != self.w.len() {
            return Err(Error::invalid(format!(
                "gradient feature of length {}, detector expects {}",
                g.len(),
                self.w.len()
            )));
        }
        match self.mode {
            GlirMode::Linear => Ok(g
                .iter()
                .zip(&self.mu0)
                .zip(&self.mu1)
                .zip(&self.w)
                .map(|(((&gv, &a), &b), &w)| (gv - 0.5 * (a + b)) * w)
                .sum()),
            GlirMode::ChiSquare => {
                let centered = DVector::from_iterator(g.len(), g.iter().zip(&self.mu0).map(|(a, b)| a - b));
                let z = self.factor.solve_lower_triangular(&centered).ok_or(Error::Singular {
                    condition: f64::INFINITY,
                })?;
                let q = z.norm_squared();
                let d = g.len() as f64;
                let delta = self.separation;
                Ok(normal_log_density(q, d + delta, 2.0 * (d + 2.0 * delta)) - normal_log_density(q, d, 2.0 * d))
            }
        }
    }

    pub fn score<S: Real>(&self, model: &Model<S>, x: &Tensor<S>, y: usize) -> Result<f64> {
        self.score_feature(&grad_feature(model, x, y, &self.indices)?)
    }
}

fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean) * (x - mean) / var + var.ln() + (2.0 * std::f64::consts::PI).ln())
}

/// Ratio of extreme absolute eigenvalues; infinite when the smallest vanishes.
fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let max = abs.iter().copied().fold(0.0, f64::max);
    let min = abs.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Member mean, non-member mean and the pooled covariance (row-major) with
/// divisor `n1 + n0 − 2`.
pub fn pooled_moments(members: &[Vec<f64>], nonmembers: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::invalid("GLiR needs member and non-member calibration samples"));
    }
    let d = members[0].len();
    if d == 0 || members.iter().chain(nonmembers).any(|g| g.len() != d) {
        return Err(Error::invalid("calibration features differ in length"));
    }
    let n = members.len() + nonmembers.len();
    if n < 3 {
        return Err(Error::invalid("pooled covariance needs at least 3 calibration samples"));
    }
    let mean = |rows: &[Vec<f64>]| -> Vec<f64> {
        let mut m = vec![0.0; d];
        for r in rows {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter().map(|v| v / rows.len() as f64).collect()
    };
    let mu1 = mean(members);
    let mu0 = mean(nonmembers);
    let mut centered = DMatrix::zeros(n, d);
    for (row, (g, mu)) in members
        .iter()
        .map(|g| (g, &mu1))
        .chain(nonmembers.iter().map(|g| (g, &mu0)))
        .enumerate()
    {
        for j in 0..d {
            centered[(row, j)] = g[j] - mu[j];
        }
    }
    let cov = (centered.transpose() * &centered) / (n - 2) as f64;
    let mut flat = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            flat.push(cov[(i, j)]);
        }
    }
    Ok((mu1, mu0, flat))
}

/// Fits the detector on calibration members and non-members of `model`.
pub fn glir_fit<S: Real>(
    model: &Model<S>,
    members: &[(&Tensor<S>, usize)],
    nonmembers: &[(&Tensor<S>, usize)],
    cfg: &GlirConfig,
) -> Result<GlirModel> {
    cfg.validate()?;
    let num_params = model.spec().num_params();
    let d_sub = cfg.d_sub.unwrap_or(MAX_D_SUB.min(num_params));
    let indices = subsample_indices(num_params, d_sub, cfg.seed)?;
    let features = |set: &[(&Tensor<S>, usize)]| -> Result<Vec<Vec<f64>>> {
        set.iter().map(|&(x, y)| grad_feature(model, x, y, &indices)).collect()
    };
    let m = features(members)?;
    let n = features(nonmembers)?;
    GlirModel::fit_features(&m, &n, cfg.ridge, indices, cfg.mode)
}
