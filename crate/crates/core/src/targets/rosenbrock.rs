use rand::Rng;
use rand_distr::StandardNormal;

use super::{sanitize, AnalyticMoments, Model};

/// Rosenbrock-type chain density:
/// `θ₀ ~ N(μ, σ₀²)`, `θ_k | θ_{k-1} ~ N(θ_{k-1}², s²)`.
///
/// Two links give the 2-D Rosenbrock, three give the 3-D hybrid variant
/// (a single block of the hybrid construction).
#[derive(Debug, Clone)]
pub struct RosenbrockChain {
    name: String,
    mean: f64,
    first_sd: f64,
    cond_sd: f64,
    len: usize,
}

impl RosenbrockChain {
    pub fn new(name: impl Into<String>, len: usize, mean: f64, first_sd: f64, cond_sd: f64) -> Self {
        assert!(len >= 1 && first_sd > 0.0 && cond_sd > 0.0);
        Self { name: name.into(), mean, first_sd, cond_sd, len }
    }

    /// `exp(-(θ₁-1)²/2 - (θ₂-θ₁²)²/(2·0.1²))`.
    pub fn rosenbrock2() -> Self {
        Self::new("rosenbrock-2", 2, 1.0, 1.0, 0.1)
    }

    pub fn hybrid3() -> Self {
        Self::new("rosenbrockhy3-3", 3, 1.0, 1.0, 0.1)
    }

    pub fn cond_sd(&self) -> f64 {
        self.cond_sd
    }

    /// Exact draw by ancestral sampling.
    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let z: f64 = rng.sample(StandardNormal);
        out[0] = self.mean + self.first_sd * z;
        for k in 1..self.len {
            let z: f64 = rng.sample(StandardNormal);
            out[k] = out[k - 1] * out[k - 1] + self.cond_sd * z;
        }
    }

    /// Raw moments `E[θ_k^j]`, `j = 0..=order`, propagated exactly through the chain.
    fn raw_moments(&self, k: usize, order: usize) -> Vec<f64> {
        if k == 0 {
            return gaussian_raw_moments(self.mean, self.first_sd, order);
        }
        // θ_k = X² + sZ with X = θ_{k-1} independent of Z.
        let parent = self.raw_moments(k - 1, 2 * order);
        let z = gaussian_raw_moments(0.0, 1.0, order);
        (0..=order)
            .map(|j| {
                (0..=j)
                    .map(|i| {
                        binomial(j, i)
                            * parent[2 * i]
                            * self.cond_sd.powi((j - i) as i32)
                            * z[j - i]
                    })
                    .sum()
            })
            .collect()
    }
}

fn gaussian_raw_moments(mu: f64, sd: f64, order: usize) -> Vec<f64> {
    let mut m = vec![1.0; order + 1];
    if order >= 1 {
        m[1] = mu;
    }
    for j in 2..=order {
        m[j] = mu * m[j - 1] + (j - 1) as f64 * sd * sd * m[j - 2];
    }
    m
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Model for RosenbrockChain {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.len
    }

    fn logp(&self, theta: &[f64]) -> f64 {
        let a = (theta[0] - self.mean) / self.first_sd;
        let s2 = self.cond_sd * self.cond_sd;
        let links: f64 = theta
            .windows(2)
            .map(|w| {
                let r = w[1] - w[0] * w[0];
                r * r
            })
            .sum();
        sanitize(-0.5 * a * a - 0.5 * links / s2)
    }

    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let s2 = self.cond_sd * self.cond_sd;
        grad[0] = -(theta[0] - self.mean) / (self.first_sd * self.first_sd);
        for g in grad[1..].iter_mut() {
            *g = 0.0;
        }
        for k in 1..self.len {
            let r = (theta[k] - theta[k - 1] * theta[k - 1]) / s2;
            grad[k] -= r;
            grad[k - 1] += 2.0 * theta[k - 1] * r;
        }
        self.logp(theta)
    }

    fn moments(&self) -> Option<AnalyticMoments> {
        let mut mean = Vec::with_capacity(self.len);
        let mut variance = Vec::with_capacity(self.len);
        let mut mean_sq = Vec::with_capacity(self.len);
        let mut variance_sq = Vec::with_capacity(self.len);
        for k in 0..self.len {
            let m = self.raw_moments(k, 4);
            mean.push(m[1]);
            variance.push(m[2] - m[1] * m[1]);
            mean_sq.push(m[2]);
            variance_sq.push(m[4] - m[2] * m[2]);
        }
        AnalyticMoments::new(mean, variance, mean_sq, variance_sq).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::test_support::assert_grad_matches_fd;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mode_has_zero_gradient() {
        let m = RosenbrockChain::rosenbrock2();
        assert_eq!(m.grad(&[1.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(m.logp(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn first_marginal_is_unit_normal_around_one() {
        for m in [RosenbrockChain::rosenbrock2(), RosenbrockChain::hybrid3()] {
            let mom = m.moments().unwrap();
            assert_relative_eq!(mom.mean[0], 1.0);
            assert_relative_eq!(mom.variance[0], 1.0);
        }
    }

    #[test]
    fn rosenbrock2_closed_form_moments() {
        // θ₁ ~ N(1,1): E θ₁² = 2, E θ₁⁴ = 10, E θ₁⁸ = 764.
        let mom = RosenbrockChain::rosenbrock2().moments().unwrap();
        assert_relative_eq!(mom.mean[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(mom.variance[1], 6.01, max_relative = 1e-12);
        assert_relative_eq!(mom.mean_sq[1], 10.01, max_relative = 1e-12);
        assert_relative_eq!(mom.variance_sq[1], 764.6003 - 10.01 * 10.01, max_relative = 1e-12);
    }

    #[test]
    fn analytic_moments_match_ancestral_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for model in [RosenbrockChain::rosenbrock2(), RosenbrockChain::hybrid3()] {
            let mom = model.moments().unwrap();
            let n = 2_000_000;
            let d = model.dim();
            let mut sum = vec![0.0; d];
            let mut sum_sq = vec![0.0; d];
            let mut x = vec![0.0; d];
            for _ in 0..n {
                model.sample_exact(&mut rng, &mut x);
                for k in 0..d {
                    sum[k] += x[k];
                    sum_sq[k] += x[k] * x[k];
                }
            }
            for k in 0..d {
                let m = sum[k] / n as f64;
                let v = sum_sq[k] / n as f64 - m * m;
                let se = (mom.variance[k] / n as f64).sqrt();
                assert!((m - mom.mean[k]).abs() < 5.0 * se, "dim {k}: {m} vs {}", mom.mean[k]);
                // Heavy tails in later links: variance check is loose.
                assert_relative_eq!(v, mom.variance[k], max_relative = 0.1);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [RosenbrockChain::rosenbrock2(), RosenbrockChain::hybrid3()] {
            for _ in 0..100 {
                let t: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
                assert_grad_matches_fd(&m, &t, 1e-4);
            }
        }
    }
}
