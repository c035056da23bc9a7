//! Local curvature from trajectory points and the step-size law `q(ε|x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use statrs::distribution::{Continuous, LogNormal as LogNormalDensity};

use crate::dynamics::{GradientCounter, Hamiltonian, PhasePoint};

/// Pairs with `sᵀy ≤ C_CURV·‖s‖‖y‖` are skipped.
pub const C_CURV: f64 = 1e-8;

/// Curvature estimation failed; callers retry or fall back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureFailure {
    NoCurvaturePair,
    NotConverged,
    NonPositiveEigenvalue,
}

/// Matrix-free symmetric operator.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BFGS approximation `B` of the Hessian of `V = -log π`, held as the pairs
/// applied on top of `B₀ = γI`.
///
/// Stores `u_k = B_k s_k` so that
/// `B v = γv + Σ_k [y_k (y_kᵀv)/(y_kᵀs_k) - u_k (u_kᵀv)/(s_kᵀu_k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankHessian {
    dim: usize,
    gamma: f64,
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    ys: Vec<f64>,
    su: Vec<f64>,
}

impl LowRankHessian {
    /// Builds `B` from `(s_k, y_k)` pairs given oldest first. Pairs failing
    /// the curvature condition are dropped and only the last `max_pairs`
    /// survivors are kept.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
        max_pairs: usize,
    ) -> Result<Self, CurvatureFailure> {
        let mut kept: Vec<(Vec<f64>, Vec<f64>)> = pairs
            .into_iter()
            .filter(|(s, y)| dot(s, y) > C_CURV * norm(s) * norm(y))
            .collect();
        if kept.is_empty() || max_pairs == 0 {
            return Err(CurvatureFailure::NoCurvaturePair);
        }
        let drop = kept.len().saturating_sub(max_pairs);
        kept.drain(..drop);
        let (s_last, y_last) = kept.last().unwrap();
        let gamma = dot(y_last, y_last) / dot(s_last, y_last);
        let dim = s_last.len();
        let mut b = Self { dim, gamma, s: vec![], y: vec![], u: vec![], ys: vec![], su: vec![] };
        for (s, y) in kept {
            let mut u = vec![0.0; dim];
            b.apply(&s, &mut u);
            let su = dot(&s, &u);
            b.ys.push(dot(&y, &s));
            b.su.push(su);
            b.s.push(s);
            b.y.push(y);
            b.u.push(u);
        }
        Ok(b)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn num_pairs(&self) -> usize {
        self.s.len()
    }

    pub fn last_pair(&self) -> (&[f64], &[f64]) {
        let k = self.s.len() - 1;
        (&self.s[k], &self.y[k])
    }
}

impl LinearOperator for LowRankHessian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(v) {
            *o = self.gamma * x;
        }
        for k in 0..self.u.len() {
            let cy = dot(&self.y[k], v) / self.ys[k];
            let cu = dot(&self.u[k], v) / self.su[k];
            for ((o, y), u) in out.iter_mut().zip(&self.y[k]).zip(&self.u[k]) {
                *o += cy * y - cu * u;
            }
        }
    }
}

/// Hessian approximation from consecutive positions and model gradients.
/// `s_k = θ_{k+1} - θ_k`, `y_k = -(g_{k+1} - g_k)`.
pub fn lbfgs_hessian<P: AsRef<[f64]>, G: AsRef<[f64]>>(
    positions: &[P],
    grads: &[G],
    max_pairs: usize,
) -> Result<LowRankHessian, CurvatureFailure> {
    let pairs = positions.windows(2).zip(grads.windows(2)).map(|(p, g)| {
        let s = p[1].as_ref().iter().zip(p[0].as_ref()).map(|(a, b)| a - b).collect();
        let y = g[1].as_ref().iter().zip(g[0].as_ref()).map(|(a, b)| b - a).collect();
        (s, y)
    });
    LowRankHessian::from_pairs(pairs, max_pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSettings {
    pub max_iters: usize,
    /// Failure threshold on the final relative change of the estimate.
    pub tol: f64,
    /// Early exit once the relative change drops below this.
    pub converged_tol: f64,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-3, converged_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerEstimate {
    pub lambda: f64,
    pub iterations: usize,
    pub rel_change: f64,
}

const POWER_START_SEED: u64 = 0x5eed_0f_a71a5;

/// Dominant eigenvalue by power iteration with Rayleigh quotients.
///
/// The start vector is a fixed pseudo-random direction that depends only on
/// the dimension, so the estimate is a deterministic function of the operator.
pub fn power_iteration(
    op: &dyn LinearOperator,
    settings: &PowerSettings,
) -> Result<PowerEstimate, CurvatureFailure> {
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_START_SEED);
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; d];
    let mut lambda = f64::NAN;
    let mut rel_change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iters {
        iterations += 1;
        op.apply(&v, &mut w);
        let next = dot(&v, &w);
        if !next.is_finite() {
            return Err(CurvatureFailure::NotConverged);
        }
        if lambda.is_finite() {
            rel_change = (next - lambda).abs() / next.abs().max(f64::MIN_POSITIVE);
        }
        lambda = next;
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        v.iter_mut().zip(&w).for_each(|(x, y)| *x = y / nw);
        if rel_change < settings.converged_tol {
            break;
        }
    }
    if !(lambda > 0.0) {
        return Err(CurvatureFailure::NonPositiveEigenvalue);
    }
    if rel_change > settings.tol && iterations > 1 {
        return Err(CurvatureFailure::NotConverged);
    }
    Ok(PowerEstimate { lambda, iterations, rel_change })
}

/// `ε_s = 1 / (2√λ)`.
pub fn stable_step(lambda_max: f64) -> f64 {
    0.5 / lambda_max.sqrt()
}

pub const DEFAULT_SIGMA_STAR: f64 = 1.2;

/// Lognormal law on `ε` with mean `ε_s`: `log ε ~ N(log ε_s - σ_N²/2, σ_N²)`,
/// `σ_N = log σ*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeDistribution {
    pub eps_stable: f64,
    pub sigma_star: f64,
}

impl StepSizeDistribution {
    pub fn new(eps_stable: f64, sigma_star: f64) -> Self {
        Self { eps_stable, sigma_star }
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_star.ln()
    }

    pub fn mu_n(&self) -> f64 {
        self.eps_stable.ln() - 0.5 * self.sigma_n().powi(2)
    }

    pub fn mean(&self) -> f64 {
        self.eps_stable
    }

    pub fn median(&self) -> f64 {
        self.mu_n().exp()
    }

    pub fn logpdf(&self, eps: f64) -> f64 {
        if !(eps > 0.0) {
            return f64::NEG_INFINITY;
        }
        LogNormalDensity::new(self.mu_n(), self.sigma_n())
            .map(|d| d.ln_pdf(eps))
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        LogNormal::new(self.mu_n(), self.sigma_n())
            .expect("lognormal parameters are finite")
            .sample(rng)
    }
}

pub fn lognormal_logpdf(dist: &StepSizeDistribution, eps: f64) -> f64 {
    dist.logpdf(eps)
}

pub fn lognormal_sample<R: Rng + ?Sized>(dist: &StepSizeDistribution, rng: &mut R) -> f64 {
    dist.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureSettings {
    /// Points used per Hessian approximation, `N_H`.
    pub n_h: usize,
    /// Retries with a halved step, `N_try`.
    pub n_try: usize,
    /// `ε_min = ε_init / r`.
    pub r: f64,
    pub sigma_star: f64,
    /// Halvings allowed in [`stepsize_dist_hmc`] before falling back.
    pub max_halvings: usize,
    pub power: PowerSettings,
}

impl Default for CurvatureSettings {
    fn default() -> Self {
        Self {
            n_h: 10,
            n_try: 10,
            r: 1024.0,
            sigma_star: DEFAULT_SIGMA_STAR,
            max_halvings: 20,
            power: PowerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeOutcome {
    pub dist: StepSizeDistribution,
    /// `None` when the `2ε_min` fallback was used.
    pub lambda: Option<f64>,
}

impl StepSizeOutcome {
    pub fn is_fallback(&self) -> bool {
        self.lambda.is_none()
    }
}

/// Up to `n` leapfrog steps from `x`; stops early at the first unstable
/// step. Returns the states and whether all `n` steps completed.
pub fn short_trajectory(
    h: &Hamiltonian,
    x: &PhasePoint,
    eps: f64,
    n: usize,
    counter: &mut GradientCounter,
) -> (Vec<PhasePoint>, bool) {
    let h0 = h.gibbs_logdensity(x);
    let mut states = Vec::with_capacity(n + 1);
    states.push(x.clone());
    for _ in 0..n {
        match h.leapfrog(states.last().unwrap(), eps, 1, counter) {
            Ok(y) if !h.energy_diverged(h0, &y) => states.push(y),
            _ => return (states, false),
        }
    }
    (states, true)
}

fn estimate(states: &[PhasePoint], settings: &CurvatureSettings) -> Option<f64> {
    // Oldest pair at the far end so the retained pairs sit next to the point
    // of interest.
    let positions: Vec<&[f64]> = states.iter().rev().map(|s| s.theta.as_slice()).collect();
    let grads: Vec<&[f64]> = states.iter().rev().map(|s| s.grad.as_slice()).collect();
    let b = lbfgs_hessian(&positions, &grads, settings.n_h).ok()?;
    power_iteration(&b, &settings.power).ok().map(|p| p.lambda)
}

/// `q(ε|x)` from trajectory states ordered from the point of interest
/// outwards (`states[0] = x`).
///
/// With fewer than `N_H` states, or when curvature estimation fails, a fresh
/// `N_H`-step trajectory is simulated from `x` with a halved step, up to
/// `N_try` times; after that `ε_s = 2ε_init/r`.
pub fn step_size_distribution(
    h: &Hamiltonian,
    states: &[PhasePoint],
    eps_init: f64,
    settings: &CurvatureSettings,
    counter: &mut GradientCounter,
) -> StepSizeOutcome {
    let eps_min = eps_init / settings.r;
    let mut eps = eps_init;
    let mut fresh: Vec<PhasePoint>;
    let mut current = states;
    for _ in 0..settings.n_try {
        if current.len() >= settings.n_h {
            if let Some(lambda) = estimate(current, settings) {
                let eps_s = stable_step(lambda);
                if eps_s > eps_min {
                    return StepSizeOutcome {
                        dist: StepSizeDistribution::new(eps_s, settings.sigma_star),
                        lambda: Some(lambda),
                    };
                }
            }
        }
        eps *= 0.5;
        fresh = short_trajectory(h, &states[0], eps, settings.n_h, counter).0;
        current = &fresh;
    }
    StepSizeOutcome {
        dist: StepSizeDistribution::new(2.0 * eps_min, settings.sigma_star),
        lambda: None,
    }
}

/// `q(ε|x)` when no usable trajectory exists: halve `ε` from `eps0` until an
/// `N_H`-step trajectory from `x` completes, then estimate from it.
pub fn stepsize_dist_hmc(
    h: &Hamiltonian,
    x: &PhasePoint,
    eps0: f64,
    settings: &CurvatureSettings,
    counter: &mut GradientCounter,
) -> StepSizeOutcome {
    let mut eps = eps0;
    for _ in 0..settings.max_halvings {
        eps *= 0.5;
        let (states, complete) = short_trajectory(h, x, eps, settings.n_h, counter);
        if complete {
            return step_size_distribution(h, &states, eps0, settings, counter);
        }
    }
    StepSizeOutcome {
        dist: StepSizeDistribution::new(2.0 * eps0 / settings.r, settings.sigma_star),
        lambda: None,
    }
}
