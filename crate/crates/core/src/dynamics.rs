//! Phase-space state and the leapfrog integrator.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{AtlasError, Result};
use crate::targets::Model;

/// A point `x = (θ, ρ)` with `log π(θ)` and `∇ log π(θ)` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub logp: f64,
    pub grad: Vec<f64>,
}

impl PhasePoint {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.logp.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

/// Diagonal mass matrix `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    diag: Vec<f64>,
    inv: Vec<f64>,
    sqrt: Vec<f64>,
}

impl MassMatrix {
    pub fn identity(dim: usize) -> Self {
        Self { diag: vec![1.0; dim], inv: vec![1.0; dim], sqrt: vec![1.0; dim] }
    }

    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(AtlasError::InvalidParameter("mass matrix entries must be positive".into()));
        }
        let inv = diag.iter().map(|m| 1.0 / m).collect();
        let sqrt = diag.iter().map(|m| m.sqrt()).collect();
        Ok(Self { diag, inv, sqrt })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn inverse(&self) -> &[f64] {
        &self.inv
    }

    pub fn kinetic(&self, rho: &[f64]) -> f64 {
        0.5 * rho.iter().zip(&self.inv).map(|(r, i)| r * r * i).sum::<f64>()
    }
}

/// Number of model gradient evaluations made by one chain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct GradientCounter(u64);

impl GradientCounter {
    pub fn new() -> Self {
        Self(0)
    }

    pub fn count(&self) -> u64 {
        self.0
    }

    #[inline]
    pub fn tick(&mut self) {
        self.0 += 1;
    }
}

/// Non-finite position, log density or gradient met during integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Divergence {
    /// Number of leapfrog steps completed before the failing one.
    pub completed: usize,
}

/// Default bound on `|log π̃(x_j) - log π̃(x_0)|` beyond which a trajectory
/// counts as diverged.
pub const DEFAULT_MAX_ENERGY_ERROR: f64 = 1000.0;

/// The model together with the kinetic energy, i.e. everything needed to
/// integrate Hamiltonian dynamics.
#[derive(Clone, Copy)]
pub struct Hamiltonian<'a> {
    pub model: &'a dyn Model,
    pub mass: &'a MassMatrix,
    /// Trajectory-level divergence threshold on the energy error. Leapfrog
    /// itself only flags non-finite values.
    pub max_energy_error: f64,
}

impl<'a> Hamiltonian<'a> {
    pub fn new(model: &'a dyn Model, mass: &'a MassMatrix) -> Self {
        Self { model, mass, max_energy_error: DEFAULT_MAX_ENERGY_ERROR }
    }

    pub fn with_max_energy_error(mut self, bound: f64) -> Self {
        self.max_energy_error = bound;
        self
    }

    /// True when `x` has drifted too far in energy from a reference `h0`.
    pub fn energy_diverged(&self, h0: f64, x: &PhasePoint) -> bool {
        let h = self.gibbs_logdensity(x);
        !h.is_finite() || (h - h0).abs() > self.max_energy_error
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Evaluates the model at `theta`, counting one gradient evaluation.
    pub fn point(&self, theta: Vec<f64>, rho: Vec<f64>, counter: &mut GradientCounter) -> PhasePoint {
        let mut grad = vec![0.0; theta.len()];
        let logp = self.model.logp_grad(&theta, &mut grad);
        counter.tick();
        PhasePoint { theta, rho, logp, grad }
    }

    pub fn gibbs_logdensity(&self, x: &PhasePoint) -> f64 {
        gibbs_logdensity(x, self.mass)
    }

    pub fn leapfrog(
        &self,
        x: &PhasePoint,
        eps: f64,
        n: usize,
        counter: &mut GradientCounter,
    ) -> std::result::Result<PhasePoint, Divergence> {
        leapfrog(self.model, x, eps, n, self.mass, counter)
    }

    pub fn resample_momentum<R: Rng + ?Sized>(&self, x: &PhasePoint, rng: &mut R) -> PhasePoint {
        resample_momentum(x, self.mass, rng)
    }
}

/// `log π̃(θ, ρ) = log π(θ) - ½ ρᵀM⁻¹ρ`.
pub fn gibbs_logdensity(x: &PhasePoint, mass: &MassMatrix) -> f64 {
    if x.logp == f64::NEG_INFINITY || x.logp.is_nan() {
        return f64::NEG_INFINITY;
    }
    x.logp - mass.kinetic(&x.rho)
}

/// `n` half-kick / drift / half-kick steps of size `eps`.
///
/// Reuses the cached gradient of `x`, so exactly `n` gradients are evaluated
/// on success.
pub fn leapfrog(
    model: &dyn Model,
    x: &PhasePoint,
    eps: f64,
    n: usize,
    mass: &MassMatrix,
    counter: &mut GradientCounter,
) -> std::result::Result<PhasePoint, Divergence> {
    let mut theta = x.theta.clone();
    let mut rho = x.rho.clone();
    let mut grad = x.grad.clone();
    let mut logp = x.logp;
    let half = 0.5 * eps;
    for step in 0..n {
        for ((r, g), (t, inv)) in rho.iter_mut().zip(&grad).zip(theta.iter_mut().zip(mass.inverse())) {
            *r += half * g;
            *t += eps * inv * *r;
        }
        logp = model.logp_grad(&theta, &mut grad);
        counter.tick();
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Divergence { completed: step });
        }
        for (r, g) in rho.iter_mut().zip(&grad) {
            *r += half * g;
        }
    }
    Ok(PhasePoint { theta, rho, logp, grad })
}

/// `F(θ, ρ) = (θ, -ρ)`.
pub fn flip(x: &PhasePoint) -> PhasePoint {
    PhasePoint {
        theta: x.theta.clone(),
        rho: x.rho.iter().map(|r| -r).collect(),
        logp: x.logp,
        grad: x.grad.clone(),
    }
}

/// Gibbs update `ρ ~ N(0, M)`.
pub fn resample_momentum<R: Rng + ?Sized>(x: &PhasePoint, mass: &MassMatrix, rng: &mut R) -> PhasePoint {
    let rho = mass
        .sqrt
        .iter()
        .map(|s| s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    PhasePoint { theta: x.theta.clone(), rho, logp: x.logp, grad: x.grad.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{DiagonalNormal, Funnel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn start(h: &Hamiltonian, theta: Vec<f64>, rho: Vec<f64>) -> PhasePoint {
        h.point(theta, rho, &mut GradientCounter::new())
    }

    #[test]
    fn gibbs_density_examples() {
        let id = MassMatrix::identity(2);
        let x = PhasePoint { theta: vec![0.0, 0.0], rho: vec![0.0, 0.0], logp: 0.0, grad: vec![0.0; 2] };
        assert_eq!(gibbs_logdensity(&x, &id), 0.0);
        let x = PhasePoint { rho: vec![2.0, 0.0], logp: -1.0, ..x };
        assert_eq!(gibbs_logdensity(&x, &id), -3.0);
        let m = MassMatrix::diagonal(vec![4.0]).unwrap();
        let x = PhasePoint { theta: vec![0.0], rho: vec![2.0], logp: 0.0, grad: vec![0.0] };
        assert_eq!(gibbs_logdensity(&x, &m), -0.5);
        let x = PhasePoint { logp: f64::NEG_INFINITY, ..x };
        assert_eq!(gibbs_logdensity(&x, &m), f64::NEG_INFINITY);
    }

    #[test]
    fn single_step_by_hand() {
        let model = DiagonalNormal::standard(1).unwrap();
        let mass = MassMatrix::identity(1);
        let h = Hamiltonian::new(&model, &mass);
        let x = start(&h, vec![1.0], vec![0.0]);
        let mut c = GradientCounter::new();
        let y = h.leapfrog(&x, 0.1, 1, &mut c).unwrap();
        assert_relative_eq!(y.theta[0], 0.995, max_relative = 1e-14);
        assert_relative_eq!(y.rho[0], -0.09975, max_relative = 1e-14);
        assert_eq!(c.count(), 1);
        assert_eq!(h.leapfrog(&x, 0.1, 0, &mut c).unwrap(), x);
        assert_eq!(c.count(), 1);
    }

    #[test]
    fn flip_is_an_involution() {
        let x = PhasePoint { theta: vec![0.5, 1.0], rho: vec![1.0, -2.0], logp: -0.3, grad: vec![0.1, 0.2] };
        assert_eq!(flip(&x).rho, vec![-1.0, 2.0]);
        assert_eq!(flip(&flip(&x)), x);
        let m = MassMatrix::identity(2);
        assert_eq!(gibbs_logdensity(&flip(&x), &m), gibbs_logdensity(&x, &m));
    }

    #[test]
    fn momentum_resampling() {
        let mass = MassMatrix::diagonal(vec![1.0, 4.0]).unwrap();
        let x = PhasePoint { theta: vec![0.3, -0.7], rho: vec![0.0; 2], logp: 0.0, grad: vec![0.0; 2] };
        let a = resample_momentum(&x, &mass, &mut ChaCha8Rng::seed_from_u64(9));
        let b = resample_momentum(&x, &mass, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.theta, x.theta);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let mut ss = [0.0; 2];
        for _ in 0..n {
            let y = resample_momentum(&x, &mass, &mut rng);
            ss[0] += y.rho[0] * y.rho[0];
            ss[1] += y.rho[1] * y.rho[1];
        }
        assert_relative_eq!(ss[0] / n as f64, 1.0, max_relative = 0.03);
        assert_relative_eq!(ss[1] / n as f64, 4.0, max_relative = 0.03);
    }

    #[test]
    fn divergence_is_a_value() {
        let model = Funnel::new(3).unwrap();
        let mass = MassMatrix::identity(3);
        let h = Hamiltonian::new(&model, &mass);
        let x = start(&h, vec![-5.0, 1.0, -1.0], vec![0.0, 3.0, 3.0]);
        let mut c = GradientCounter::new();
        let out = h.leapfrog(&x, 5.0, 200, &mut c);
        assert!(out.is_err());
    }

    fn leapfrog_map(h: &Hamiltonian, z: &[f64], eps: f64, n: usize) -> Vec<f64> {
        let d = z.len() / 2;
        let x = start(h, z[..d].to_vec(), z[d..].to_vec());
        let y = h.leapfrog(&x, eps, n, &mut GradientCounter::new()).unwrap();
        y.theta.into_iter().chain(y.rho).collect()
    }

    #[test]
    fn leapfrog_preserves_volume() {
        let model = crate::targets::CorrelatedNormal::new(2, 0.5).unwrap();
        let mass = MassMatrix::identity(2);
        let h = Hamiltonian::new(&model, &mass);
        let z0 = [0.3, -0.8, 1.1, 0.4];
        let step = 1e-6;
        let mut jac = nalgebra::DMatrix::<f64>::zeros(4, 4);
        for j in 0..4 {
            let mut zp = z0;
            let mut zm = z0;
            zp[j] += step;
            zm[j] -= step;
            let fp = leapfrog_map(&h, &zp, 0.3, 7);
            let fm = leapfrog_map(&h, &zm, 0.3, 7);
            for i in 0..4 {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        assert!((jac.determinant() - 1.0).abs() < 1e-6);
    }

    fn max_energy_error(h: &Hamiltonian, x: &PhasePoint, eps: f64, steps: usize) -> f64 {
        let h0 = h.gibbs_logdensity(x);
        let mut c = GradientCounter::new();
        let mut y = x.clone();
        let mut worst = 0.0f64;
        for _ in 0..steps {
            y = h.leapfrog(&y, eps, 1, &mut c).unwrap();
            worst = worst.max((h.gibbs_logdensity(&y) - h0).abs());
        }
        worst
    }

    #[test]
    fn energy_error_is_second_order() {
        let model = DiagonalNormal::standard(2).unwrap();
        let mass = MassMatrix::identity(2);
        let h = Hamiltonian::new(&model, &mass);
        let x = start(&h, vec![1.0, -0.5], vec![0.3, 0.8]);
        let coarse = max_energy_error(&h, &x, 0.1, 50);
        let fine = max_energy_error(&h, &x, 0.05, 100);
        let ratio = coarse / fine;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn stability_threshold() {
        let lambda = 9.0;
        let model = DiagonalNormal::new("narrow", vec![1.0 / lambda]).unwrap();
        let mass = MassMatrix::identity(1);
        let h = Hamiltonian::new(&model, &mass);
        let x = start(&h, vec![0.2], vec![1.0]);
        let h0 = h.gibbs_logdensity(&x);
        let run = |eps: f64| {
            let mut c = GradientCounter::new();
            let y = h.leapfrog(&x, eps, 1000, &mut c);
            y.map(|y| (h.gibbs_logdensity(&y) - h0).abs()).unwrap_or(f64::INFINITY)
        };
        assert!(run(1.9 / lambda.sqrt()) < 10.0);
        assert!(run(2.1 / lambda.sqrt()) > 1e6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn leapfrog_is_reversible(
            theta in proptest::collection::vec(-3.0f64..3.0, 3),
            rho in proptest::collection::vec(-3.0f64..3.0, 3),
            eps in 0.01f64..1.0,
            n in 0usize..=64,
        ) {
            let model = DiagonalNormal::standard(3).unwrap();
            let mass = MassMatrix::identity(3);
            let h = Hamiltonian::new(&model, &mass);
            let x = start(&h, theta, rho);
            let mut c = GradientCounter::new();
            let y = flip(&h.leapfrog(&x, eps, n, &mut c).unwrap());
            let back = flip(&h.leapfrog(&y, eps, n, &mut c).unwrap());
            for (a, b) in back.theta.iter().chain(&back.rho).zip(x.theta.iter().chain(&x.rho)) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            prop_assert_eq!(c.count(), 2 * n as u64);
        }
    }
}
