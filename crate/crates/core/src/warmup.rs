//! Baseline step-size tuning and the global trajectory-length law `q_g`.

use rand::Rng;

use crate::curvature::short_trajectory;
use crate::dynamics::{resample_momentum, GradientCounter, Hamiltonian, PhasePoint};
use crate::samplers::{hmc_step, GlobalTrajectoryDistribution};
use crate::uturn::{nout_step, NoutSettings};

/// Nesterov dual averaging of `log ε` toward a target acceptance statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualAveraging {
    pub log_eps: f64,
    pub log_eps_avg: f64,
    pub h_avg: f64,
    pub iteration: usize,
    pub target_accept: f64,
    pub mu: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl DualAveraging {
    pub fn new(eps_init: f64, target_accept: f64) -> Self {
        Self {
            log_eps: eps_init.ln(),
            log_eps_avg: 0.0,
            h_avg: 0.0,
            iteration: 0,
            target_accept,
            mu: (10.0 * eps_init).ln(),
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    pub fn eps(&self) -> f64 {
        self.log_eps.exp()
    }

    pub fn update(&mut self, accept_stat: f64) {
        self.iteration += 1;
        let m = self.iteration as f64;
        let w = 1.0 / (m + self.t0);
        self.h_avg = (1.0 - w) * self.h_avg + w * (self.target_accept - accept_stat);
        self.log_eps = self.mu - m.sqrt() / self.gamma * self.h_avg;
        let eta = m.powf(-self.kappa);
        self.log_eps_avg = eta * self.log_eps + (1.0 - eta) * self.log_eps_avg;
    }

    /// The averaged step, or the current one before any update.
    pub fn finalize(&self) -> f64 {
        if self.iteration == 0 {
            self.eps()
        } else {
            self.log_eps_avg.exp()
        }
    }
}

/// Doubles or halves `ε` from 1 until the one-step acceptance ratio crosses
/// one half.
pub fn find_reasonable_eps<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x: &PhasePoint,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> f64 {
    let x = resample_momentum(x, h.mass, rng);
    let h0 = h.gibbs_logdensity(&x);
    let log_ratio = |eps: f64, counter: &mut GradientCounter| match h.leapfrog(&x, eps, 1, counter) {
        Ok(y) => {
            let r = h.gibbs_logdensity(&y) - h0;
            if r.is_nan() { f64::NEG_INFINITY } else { r }
        }
        Err(_) => f64::NEG_INFINITY,
    };
    let mut eps = 1.0;
    let half = 0.5f64.ln();
    let grow = log_ratio(eps, counter) > half;
    for _ in 0..100 {
        let next = if grow { eps * 2.0 } else { eps * 0.5 };
        let r = log_ratio(next, counter);
        if grow != (r > half) {
            return if grow { eps } else { next };
        }
        eps = next;
    }
    eps
}

#[derive(Debug, Clone)]
pub struct TunedStep {
    pub eps0: f64,
    /// Chain state after tuning.
    pub state: PhasePoint,
    /// Every tuning iteration diverged; `eps0` is then the first halving of
    /// the initial guess that completes a trajectory.
    pub all_diverged: bool,
}

/// Dual averaging over `n_iters` HMC steps of `n_leapfrog` steps each. The
/// acceptance statistic is `min(1, exp(ΔH))`, zero on divergence.
pub fn tune_eps0<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x0: &PhasePoint,
    n_iters: usize,
    n_leapfrog: usize,
    target_accept: f64,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> TunedStep {
    let eps_init = find_reasonable_eps(h, x0, rng, counter);
    let mut da = DualAveraging::new(eps_init, target_accept);
    let mut x = x0.clone();
    let mut all_diverged = true;
    for _ in 0..n_iters {
        let y = resample_momentum(&x, h.mass, rng);
        let (next, out) = hmc_step(h, &y, da.eps(), n_leapfrog, rng, counter);
        all_diverged &= out.diverged;
        da.update(if out.diverged { 0.0 } else { out.alpha });
        x = next;
    }
    if all_diverged && n_iters > 0 {
        let mut eps = eps_init;
        for _ in 0..60 {
            eps *= 0.5;
            let y = resample_momentum(&x, h.mass, rng);
            if short_trajectory(h, &y, eps, n_leapfrog, counter).1 {
                break;
            }
        }
        return TunedStep { eps0: eps, state: x, all_diverged };
    }
    TunedStep { eps0: da.finalize(), state: x, all_diverged: false }
}

/// `{p10, …, p90}` of the lengths under the nearest-rank convention, with
/// `lo ≥ 1`. `None` for an empty sample.
pub fn qg_from_lengths(lengths: &[usize]) -> Option<GlobalTrajectoryDistribution> {
    if lengths.is_empty() {
        return None;
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let rank = |p: f64| {
        let r = (p * sorted.len() as f64).ceil() as usize;
        sorted[r.clamp(1, sorted.len()) - 1]
    };
    let lo = rank(0.1).max(1);
    let hi = rank(0.9).max(lo);
    Some(GlobalTrajectoryDistribution { lo, hi })
}

#[derive(Debug, Clone)]
pub struct QgSample {
    /// U-turn lengths of non-diverged, uncapped trajectories.
    pub lengths: Vec<usize>,
    pub state: PhasePoint,
}

/// Runs `n_proposals` NoUT steps at `eps0` and records U-turn lengths.
pub fn collect_uturn_lengths<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x0: &PhasePoint,
    settings: &NoutSettings,
    n_proposals: usize,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> QgSample {
    let mut x = x0.clone();
    let mut lengths = Vec::with_capacity(n_proposals);
    for _ in 0..n_proposals {
        let y = resample_momentum(&x, h.mass, rng);
        let (next, info) = nout_step(h, &y, settings, rng, counter);
        if !info.capped && !info.diverged && info.n_ut > 0 {
            lengths.push(info.n_ut);
        }
        x = next;
    }
    QgSample { lengths, state: x }
}

#[derive(Debug, Clone)]
pub struct QgBuild {
    pub qg: GlobalTrajectoryDistribution,
    pub sample: QgSample,
    /// No usable length was observed and the default `{1..32}` was used.
    pub fallback: bool,
}

pub fn build_qg<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x0: &PhasePoint,
    settings: &NoutSettings,
    n_proposals: usize,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> QgBuild {
    let sample = collect_uturn_lengths(h, x0, settings, n_proposals, rng, counter);
    match qg_from_lengths(&sample.lengths) {
        Some(qg) => QgBuild { qg, sample, fallback: false },
        None => QgBuild { qg: GlobalTrajectoryDistribution::default(), sample, fallback: true },
    }
}
