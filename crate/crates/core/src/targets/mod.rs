//! Differentiable target densities and their reference moments.
//!
//! Every density is unnormalised. Log densities return `-inf` instead of
//! failing when evaluated outside the support or at overflowing inputs.

mod funnel;
mod gaussian;
mod linear;
mod registry;
mod rosenbrock;

pub use funnel::{Funnel, MultiFunnel};
pub use gaussian::{CorrelatedNormal, DiagonalNormal};
pub use linear::Linear;
pub use registry::{list_models, model_from_name, ModelFamily};
pub use rosenbrock::RosenbrockChain;

use crate::error::{AtlasError, Result};

/// A differentiable, unnormalised log density on `R^D`.
///
/// Implementations are immutable and may be evaluated concurrently.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// `log π(θ)` up to an additive constant.
    fn logp(&self, theta: &[f64]) -> f64;

    /// Writes `∇ log π(θ)` into `grad` and returns `log π(θ)`.
    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn grad(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.logp_grad(theta, &mut g);
        g
    }

    /// Exact per-dimension moments of `θ` and `θ²`, when known.
    fn moments(&self) -> Option<AnalyticMoments> {
        None
    }
}

/// Per-dimension reference moments of `θ_d` and `θ_d²`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub variance_sq: Vec<f64>,
}

impl AnalyticMoments {
    pub fn new(
        mean: Vec<f64>,
        variance: Vec<f64>,
        mean_sq: Vec<f64>,
        variance_sq: Vec<f64>,
    ) -> Result<Self> {
        let d = mean.len();
        for len in [variance.len(), mean_sq.len(), variance_sq.len()] {
            if len != d {
                return Err(AtlasError::DimensionMismatch { expected: d, got: len });
            }
        }
        if let Some(i) = variance
            .iter()
            .chain(&variance_sq)
            .position(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(AtlasError::InvalidParameter(format!(
                "reference variance {} is not strictly positive",
                i % d.max(1)
            )));
        }
        Ok(Self { mean, variance, mean_sq, variance_sq })
    }

    /// Moments of independent Gaussian marginals `N(μ_d, σ_d²)`.
    pub fn gaussian(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        let mean_sq = mean.iter().zip(&variance).map(|(m, v)| m * m + v).collect();
        let variance_sq = mean
            .iter()
            .zip(&variance)
            .map(|(m, v)| 2.0 * v * v + 4.0 * m * m * v)
            .collect();
        Self::new(mean, variance, mean_sq, variance_sq)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sd(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }

    pub fn sd_sq(&self) -> Vec<f64> {
        self.variance_sq.iter().map(|v| v.sqrt()).collect()
    }

    pub fn concat(parts: &[AnalyticMoments]) -> Self {
        let cat = |f: fn(&AnalyticMoments) -> &Vec<f64>| {
            parts.iter().flat_map(|p| f(p).iter().copied()).collect::<Vec<_>>()
        };
        Self {
            mean: cat(|p| &p.mean),
            variance: cat(|p| &p.variance),
            mean_sq: cat(|p| &p.mean_sq),
            variance_sq: cat(|p| &p.variance_sq),
        }
    }
}

/// Maps NaN log densities to `-inf`.
#[inline]
pub(crate) fn sanitize(logp: f64) -> f64 {
    if logp.is_nan() {
        f64::NEG_INFINITY
    } else {
        logp
    }
}

pub fn make_std_normal(dim: usize) -> Result<DiagonalNormal> {
    DiagonalNormal::standard(dim)
}

pub fn make_ill_conditioned_normal(dim: usize, cond: f64) -> Result<DiagonalNormal> {
    DiagonalNormal::ill_conditioned(dim, cond)
}

pub fn make_corr_normal(dim: usize, r: f64) -> Result<CorrelatedNormal> {
    CorrelatedNormal::new(dim, r)
}

pub fn make_funnel(dim: usize) -> Result<Funnel> {
    Funnel::new(dim)
}

pub fn make_multifunnel(copies: usize, dim_each: usize) -> Result<MultiFunnel> {
    MultiFunnel::new(copies, dim_each)
}

pub fn make_rosenbrock2() -> RosenbrockChain {
    RosenbrockChain::rosenbrock2()
}

pub fn make_hybrid_rosenbrock3() -> RosenbrockChain {
    RosenbrockChain::hybrid3()
}
