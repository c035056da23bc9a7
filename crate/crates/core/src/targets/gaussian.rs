use super::{sanitize, AnalyticMoments, Model};
use crate::error::{AtlasError, Result};

/// Independent zero-mean Gaussian with per-dimension variances.
#[derive(Debug, Clone)]
pub struct DiagonalNormal {
    name: String,
    variances: Vec<f64>,
    precisions: Vec<f64>,
}

impl DiagonalNormal {
    pub fn new(name: impl Into<String>, variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(AtlasError::InvalidParameter("dimension must be at least 1".into()));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(AtlasError::InvalidParameter("variances must be positive".into()));
        }
        let precisions = variances.iter().map(|v| 1.0 / v).collect();
        Ok(Self { name: name.into(), variances, precisions })
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(format!("std_normal-{dim}"), vec![1.0; dim])
    }

    /// Variances log-spaced from 1 to `cond`: `σ_d² = cond^(d/(D-1))`.
    pub fn ill_conditioned(dim: usize, cond: f64) -> Result<Self> {
        if !(cond >= 1.0 && cond.is_finite()) {
            return Err(AtlasError::InvalidParameter(format!(
                "condition number must be >= 1, got {cond}"
            )));
        }
        let variances = (0..dim)
            .map(|d| if dim == 1 { 1.0 } else { cond.powf(d as f64 / (dim - 1) as f64) })
            .collect();
        let name = if cond == 1000.0 {
            format!("ill_normal-{dim}")
        } else {
            format!("ill_normal-{cond}-{dim}")
        };
        Self::new(name, variances)
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }
}

impl Model for DiagonalNormal {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.variances.len()
    }

    fn logp(&self, theta: &[f64]) -> f64 {
        let q: f64 = theta.iter().zip(&self.precisions).map(|(t, p)| t * t * p).sum();
        sanitize(-0.5 * q)
    }

    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        for ((g, t), p) in grad.iter_mut().zip(theta).zip(&self.precisions) {
            *g = -t * p;
        }
        self.logp(theta)
    }

    fn moments(&self) -> Option<AnalyticMoments> {
        AnalyticMoments::gaussian(vec![0.0; self.dim()], self.variances.clone()).ok()
    }
}

/// Zero-mean Gaussian with unit variances and constant correlation `r`.
///
/// The precision matrix is applied through the Sherman–Morrison closed form
/// `Σ⁻¹ = (I - c·11ᵀ)/(1 - r)` with `c = r / (1 + (D-1) r)`.
#[derive(Debug, Clone)]
pub struct CorrelatedNormal {
    name: String,
    dim: usize,
    r: f64,
    c: f64,
}

impl CorrelatedNormal {
    pub fn new(dim: usize, r: f64) -> Result<Self> {
        if dim == 0 {
            return Err(AtlasError::InvalidParameter("dimension must be at least 1".into()));
        }
        let lower = if dim > 1 { -1.0 / (dim - 1) as f64 } else { -1.0 };
        if !(r > lower && r < 1.0) {
            return Err(AtlasError::InvalidParameter(format!(
                "correlation {r} outside the positive-definite range ({lower}, 1) for D={dim}"
            )));
        }
        let c = r / (1.0 + (dim as f64 - 1.0) * r);
        let pct = r * 100.0;
        let name = if (pct - pct.round()).abs() < 1e-9 && pct >= 0.0 {
            format!("corr_normal{:02}-{dim}", pct.round() as u32)
        } else {
            format!("corr_normal-{r}-{dim}")
        };
        Ok(Self { name, dim, r, c })
    }

    pub fn correlation(&self) -> f64 {
        self.r
    }

    fn precision_times(&self, theta: &[f64], out: &mut [f64]) {
        let sum: f64 = theta.iter().sum();
        let scale = 1.0 / (1.0 - self.r);
        for (o, t) in out.iter_mut().zip(theta) {
            *o = (t - self.c * sum) * scale;
        }
    }
}

impl Model for CorrelatedNormal {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn logp(&self, theta: &[f64]) -> f64 {
        let sum: f64 = theta.iter().sum();
        let sq: f64 = theta.iter().map(|t| t * t).sum();
        sanitize(-0.5 * (sq - self.c * sum * sum) / (1.0 - self.r))
    }

    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.precision_times(theta, grad);
        let mut quad = 0.0;
        for (g, t) in grad.iter_mut().zip(theta) {
            quad += *g * t;
            *g = -*g;
        }
        sanitize(-0.5 * quad)
    }

    fn moments(&self) -> Option<AnalyticMoments> {
        AnalyticMoments::gaussian(vec![0.0; self.dim], vec![1.0; self.dim]).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::test_support::assert_grad_matches_fd;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn std_normal_values() {
        let m = DiagonalNormal::standard(1).unwrap();
        assert_eq!(m.logp(&[0.0]), 0.0);
        assert_eq!(m.grad(&[0.0]), vec![0.0]);
        assert_eq!(m.logp(&[3.0]), -4.5);
        let m2 = DiagonalNormal::standard(2).unwrap();
        assert_eq!(m2.grad(&[1.0, 0.0]), vec![-1.0, 0.0]);
        let mom = m2.moments().unwrap();
        assert_eq!(mom.mean_sq, vec![1.0, 1.0]);
        assert_eq!(mom.variance_sq, vec![2.0, 2.0]);
    }

    #[test]
    fn ill_conditioned_log_spacing() {
        let m = DiagonalNormal::ill_conditioned(2, 4.0).unwrap();
        assert_eq!(m.variances(), &[1.0, 4.0]);
        assert_eq!(m.grad(&[0.0, 0.0]), vec![0.0, 0.0]);
        let m = DiagonalNormal::ill_conditioned(100, 1000.0).unwrap();
        let mom = m.moments().unwrap();
        for d in 0..100 {
            assert_relative_eq!(mom.variance[d], 1000f64.powf(d as f64 / 99.0), max_relative = 1e-12);
        }
        assert_eq!(m.name(), "ill_normal-100");
        assert!(DiagonalNormal::ill_conditioned(3, 0.5).is_err());
    }

    #[test]
    fn zero_correlation_matches_std_normal() {
        let c = CorrelatedNormal::new(2, 0.0).unwrap();
        let s = DiagonalNormal::standard(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let t = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            assert_eq!(c.logp(&t), s.logp(&t));
            assert_eq!(c.grad(&t), s.grad(&t));
        }
    }

    #[test]
    fn corr_normal_2d_gradient() {
        let m = CorrelatedNormal::new(2, 0.95).unwrap();
        let k = 1.0 / (1.0 - 0.95 * 0.95);
        let expected = [-(k * (1.0 - 0.95)), -(k * (1.0 - 0.95))];
        let g = m.grad(&[1.0, 1.0]);
        assert_relative_eq!(g[0], expected[0], max_relative = 1e-12);
        assert_relative_eq!(g[1], expected[1], max_relative = 1e-12);
        assert_eq!(m.name(), "corr_normal95-2");
    }

    #[test]
    fn corr_normal_matches_dense_inverse() {
        let d = 3;
        let r = 0.5;
        let m = CorrelatedNormal::new(d, r).unwrap();
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { r });
        let prec = sigma.try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let t: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = nalgebra::DVector::from_vec(t.clone());
            let dense = -0.5 * (v.transpose() * &prec * &v)[(0, 0)];
            assert_relative_eq!(m.logp(&t), dense, max_relative = 1e-10);
            let g = m.grad(&t);
            let dense_g = -(&prec * &v);
            for i in 0..d {
                assert_relative_eq!(g[i], dense_g[i], max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn corr_normal_rejects_indefinite() {
        assert!(CorrelatedNormal::new(3, -0.5).is_err());
        assert!(CorrelatedNormal::new(3, 1.0).is_err());
        assert!(CorrelatedNormal::new(3, -0.49).is_ok());
    }

    #[test]
    fn gaussian_gradients_match_finite_differences() {
        let models: Vec<Box<dyn Model>> = vec![
            Box::new(DiagonalNormal::ill_conditioned(5, 50.0).unwrap()),
            Box::new(CorrelatedNormal::new(6, 0.95).unwrap()),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in &models {
            for _ in 0..100 {
                let t: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                assert_grad_matches_fd(m.as_ref(), &t, 1e-4);
            }
        }
    }
}
