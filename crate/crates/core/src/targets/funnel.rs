use super::{sanitize, AnalyticMoments, Model};
use crate::error::{AtlasError, Result};

/// Neal's funnel: `θ₀ ~ N(0, 3²)`, `θ_i | θ₀ ~ N(0, exp(θ₀))` for `i = 1..D-1`.
#[derive(Debug, Clone)]
pub struct Funnel {
    name: String,
    dim: usize,
    scale_sd: f64,
}

impl Funnel {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(AtlasError::InvalidParameter(format!(
                "funnel needs dim >= 2, got {dim}"
            )));
        }
        Ok(Self { name: format!("funnel-{dim}"), dim, scale_sd: 3.0 })
    }

    pub fn scale_sd(&self) -> f64 {
        self.scale_sd
    }

    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let v = theta[0];
        let latent = &theta[1..];
        let inv_var = (-v).exp();
        let sq: f64 = latent.iter().map(|t| t * t).sum();
        let n = latent.len() as f64;
        let s2 = self.scale_sd * self.scale_sd;
        let logp = -0.5 * v * v / s2 - 0.5 * sq * inv_var - 0.5 * n * v;
        if let Some(g) = grad {
            g[0] = -v / s2 + 0.5 * sq * inv_var - 0.5 * n;
            for (gi, t) in g[1..].iter_mut().zip(latent) {
                *gi = -t * inv_var;
            }
        }
        sanitize(logp)
    }

    fn moments_block(&self) -> AnalyticMoments {
        let s2 = self.scale_sd * self.scale_sd;
        let n = self.dim - 1;
        // E[exp(θ₀)] and E[exp(2θ₀)] for θ₀ ~ N(0, s²).
        let e1 = (0.5 * s2).exp();
        let e2 = (2.0 * s2).exp();
        let with_latent = |first: f64, rest: f64| -> Vec<f64> {
            std::iter::once(first).chain(std::iter::repeat_n(rest, n)).collect()
        };
        let mean = vec![0.0; self.dim];
        let variance = with_latent(s2, e1);
        let mean_sq = with_latent(s2, e1);
        let variance_sq = with_latent(2.0 * s2 * s2, 3.0 * e2 - e1 * e1);
        AnalyticMoments { mean, variance, mean_sq, variance_sq }
    }
}

impl Model for Funnel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn logp(&self, theta: &[f64]) -> f64 {
        self.eval(theta, None)
    }

    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(theta, Some(grad))
    }

    fn moments(&self) -> Option<AnalyticMoments> {
        Some(self.moments_block())
    }
}

/// Independent copies of a funnel, concatenated.
#[derive(Debug, Clone)]
pub struct MultiFunnel {
    name: String,
    block: Funnel,
    copies: usize,
}

impl MultiFunnel {
    pub fn new(copies: usize, dim_each: usize) -> Result<Self> {
        if copies == 0 {
            return Err(AtlasError::InvalidParameter("copies must be at least 1".into()));
        }
        let block = Funnel::new(dim_each)?;
        let dim = copies * dim_each;
        let name = if dim_each == 10 {
            format!("multifunnel-{dim}")
        } else {
            format!("multifunnel-{dim_each}-{dim}")
        };
        Ok(Self { name, block, copies })
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    pub fn block(&self) -> &Funnel {
        &self.block
    }
}

impl Model for MultiFunnel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.copies * self.block.dim
    }

    fn logp(&self, theta: &[f64]) -> f64 {
        sanitize(theta.chunks(self.block.dim).map(|c| self.block.logp(c)).sum())
    }

    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.block.dim;
        let total = theta
            .chunks(k)
            .zip(grad.chunks_mut(k))
            .map(|(t, g)| self.block.logp_grad(t, g))
            .sum();
        sanitize(total)
    }

    fn moments(&self) -> Option<AnalyticMoments> {
        let block = self.block.moments_block();
        Some(AnalyticMoments::concat(&vec![block; self.copies]))
    }
}
