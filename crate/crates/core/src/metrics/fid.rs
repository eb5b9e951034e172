use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{embed_all, EmbedConfig, FeatureVector, MetricError};
use crate::layout::{ClassRegistry, LayoutDoc};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidConfig {
    /// Ridge added to both covariances.
    pub eps: f64,
    /// Ridge used instead when a population has no more samples than dimensions.
    pub small_sample_eps: f64,
    /// Population size evaluations subsample to.
    pub sample_size: usize,
    pub min_samples: usize,
}

impl Default for FidConfig {
    fn default() -> Self {
        Self { eps: 1e-6, small_sample_eps: 1e-3, sample_size: 512, min_samples: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidResult {
    pub score: f64,
    pub n1: usize,
    pub n2: usize,
    pub dim: usize,
    pub eps: f64,
    /// `|mu_a - mu_b|^2`
    pub mean_term: f64,
    /// `Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`
    pub trace_term: f64,
    /// Set when a population had no more samples than feature dimensions.
    pub low_sample: bool,
}

struct Moments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn moments(pop: &[FeatureVector], dim: usize) -> Moments {
    let n = pop.len();
    let data = DMatrix::from_fn(n, dim, |r, c| pop[r].0[c]);
    let mean = DVector::from_fn(dim, |c, _| data.column(c).sum() / n as f64);
    if n < 2 {
        return Moments { mean, cov: DMatrix::zeros(dim, dim) };
    }
    let mut centered = data;
    for (c, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[c]);
    }
    let cov = centered.tr_mul(&centered) / (n - 1) as f64;
    Moments { mean, cov }
}

fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

/// Square root of a symmetric positive semi-definite matrix by
/// eigendecomposition; negative eigenvalues are clamped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetric_eigen(m);
    let roots = eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    scaled * eig.eigenvectors.transpose()
}

fn check(pop: &[FeatureVector]) -> Result<usize, MetricError> {
    let dim = pop.first().ok_or(MetricError::EmptyPopulation)?.dim();
    for v in pop {
        if v.dim() != dim {
            return Err(MetricError::DimensionMismatch(dim, v.dim()));
        }
        if v.0.iter().any(|x| !x.is_finite()) {
            return Err(MetricError::NonFinite);
        }
    }
    Ok(dim)
}

/// Fréchet distance between Gaussian fits of two feature populations:
/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`.
///
/// Covariances are unbiased and ridge-regularized. The matrix root is taken
/// through the symmetric form `(A S_b A)^(1/2)` with `A = S_a^(1/2)`, which
/// has the same trace.
pub fn fid(pop_a: &[FeatureVector], pop_b: &[FeatureVector], cfg: &FidConfig) -> Result<FidResult, MetricError> {
    let dim = check(pop_a)?;
    let dim_b = check(pop_b)?;
    if dim != dim_b {
        return Err(MetricError::DimensionMismatch(dim, dim_b));
    }
    let (n1, n2) = (pop_a.len(), pop_b.len());
    let low_sample = n1.min(n2) <= dim;
    let eps = if low_sample { cfg.eps.max(cfg.small_sample_eps) } else { cfg.eps };

    let a = moments(pop_a, dim);
    let b = moments(pop_b, dim);
    let mean_term = (&a.mean - &b.mean).norm_squared();

    let ridge = DMatrix::<f64>::identity(dim, dim) * eps;
    let cov_a = &a.cov + &ridge;
    let cov_b = &b.cov + &ridge;
    let root_a = sqrtm_psd(&cov_a);
    let inner = &root_a * &cov_b * &root_a;
    let trace_root: f64 = symmetric_eigen(&inner)
        .eigenvalues
        .iter()
        .map(|l| libm::sqrt(l.max(0.0)))
        .sum();
    let trace_term = cov_a.trace() + cov_b.trace() - 2.0 * trace_root;
    let score = (mean_term + trace_term).max(0.0);
    Ok(FidResult { score, n1, n2, dim, eps, mean_term, trace_term, low_sample })
}

/// Embeds two layout populations and compares them.
pub fn fid_layouts(
    pop_a: &[LayoutDoc],
    pop_b: &[LayoutDoc],
    registry: &ClassRegistry,
    embed_cfg: &EmbedConfig,
    cfg: &FidConfig,
) -> Result<FidResult, MetricError> {
    for pop in [pop_a, pop_b] {
        if pop.len() < cfg.min_samples {
            return Err(MetricError::TooFewSamples { need: cfg.min_samples, got: pop.len() });
        }
    }
    let a: Vec<FeatureVector> = embed_all(pop_a, registry, embed_cfg);
    let b: Vec<FeatureVector> = embed_all(pop_b, registry, embed_cfg);
    fid(&a, &b, cfg)
}
