use super::Model;

/// `log π(θ) = aᵀθ`, an improper density with constant gradient.
///
/// Degenerate on purpose: with `a = 0` trajectories never turn, and curvature
/// pairs built on it never satisfy the curvature condition.
#[derive(Debug, Clone)]
pub struct Linear {
    slope: Vec<f64>,
}

impl Linear {
    pub fn new(slope: Vec<f64>) -> Self {
        Self { slope }
    }

    pub fn flat(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }
}

impl Model for Linear {
    fn name(&self) -> &str {
        "linear"
    }

    fn dim(&self) -> usize {
        self.slope.len()
    }

    fn logp(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.slope).map(|(t, a)| t * a).sum()
    }

    fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        grad.copy_from_slice(&self.slope);
        self.logp(theta)
    }
}
