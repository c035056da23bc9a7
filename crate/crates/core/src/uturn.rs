//! U-turn trajectories, the index proposal `q(n|x)` and the fixed-step NoUT
//! sampler.

use rand::Rng;

use crate::dynamics::{flip, GradientCounter, Hamiltonian, PhasePoint};

pub const DEFAULT_N_MAX: usize = 1024;
pub const DEFAULT_F_OFF_RANGE: (f64, f64) = (0.33, 0.66);

/// Leapfrog states from a start point up to the first U-turn.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `states[0]` is the start. Holds `n_ut + 1` states unless diverged.
    pub states: Vec<PhasePoint>,
    pub n_ut: usize,
    /// `n_max` steps were taken without a U-turn.
    pub capped: bool,
    /// A step produced non-finite values or an energy error beyond the
    /// Hamiltonian's bound. `n_ut` is then the last stable index.
    pub diverged: bool,
}

impl Trajectory {
    pub fn start(&self) -> &PhasePoint {
        &self.states[0]
    }

    /// Trajectory with the last point first, for building curvature pairs
    /// around the end that matters.
    pub fn reversed(&self) -> Vec<PhasePoint> {
        self.states.iter().rev().cloned().collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs until the distance to the start fails to increase strictly.
/// `prefix(k)` may supply the k-th state instead of integrating it.
fn simulate(
    h: &Hamiltonian,
    x: &PhasePoint,
    eps: f64,
    n_max: usize,
    counter: &mut GradientCounter,
    mut prefix: impl FnMut(usize) -> Option<PhasePoint>,
) -> Trajectory {
    let h0 = h.gibbs_logdensity(x);
    let mut states = vec![x.clone()];
    let mut d_prev = 0.0;
    for j in 1..=n_max {
        let next = match prefix(j) {
            Some(y) => Ok(y),
            None => h.leapfrog(&states[j - 1], eps, 1, counter).map_err(|_| ()),
        };
        let next = match next {
            Ok(y) if !h.energy_diverged(h0, &y) => y,
            _ => {
                return Trajectory { states, n_ut: j - 1, capped: false, diverged: true };
            }
        };
        let d = sq_dist(&next.theta, &x.theta);
        states.push(next);
        if d <= d_prev {
            return Trajectory { states, n_ut: j, capped: false, diverged: false };
        }
        d_prev = d;
    }
    Trajectory { states, n_ut: n_max, capped: true, diverged: false }
}

pub fn traj_upto_uturn(
    h: &Hamiltonian,
    x: &PhasePoint,
    eps: f64,
    n_max: usize,
    counter: &mut GradientCounter,
) -> Trajectory {
    simulate(h, x, eps, n_max, counter, |_| None)
}

/// Trajectory from `F(x_n)` that reuses the forward states `F(x_{n-k})` for
/// `k ≤ n` and integrates fresh beyond the forward start.
pub fn reverse_trajectory_cached(
    h: &Hamiltonian,
    forward: &Trajectory,
    n: usize,
    eps: f64,
    n_max: usize,
    counter: &mut GradientCounter,
) -> Trajectory {
    let y = flip(&forward.states[n]);
    simulate(h, &y, eps, n_max, counter, |k| (k <= n).then(|| flip(&forward.states[n - k])))
}

/// Uniform law on `{⌊f_off·n_ut⌋, …, n_ut}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexDistribution {
    pub lo: usize,
    pub hi: usize,
    pub f_off: f64,
}

impl IndexDistribution {
    pub fn new(n_ut: usize, f_off: f64) -> Self {
        let lo = ((f_off * n_ut as f64).floor() as usize).min(n_ut);
        Self { lo, hi: n_ut, f_off }
    }

    pub fn support_len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, n: usize) -> bool {
        (self.lo..=self.hi).contains(&n)
    }

    pub fn mass(&self, n: usize) -> f64 {
        if self.contains(n) {
            1.0 / self.support_len() as f64
        } else {
            0.0
        }
    }

    pub fn log_mass(&self, n: usize) -> f64 {
        self.mass(n).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

pub fn index_distribution(n_ut: usize, f_off: f64) -> IndexDistribution {
    IndexDistribution::new(n_ut, f_off)
}

/// `q(n|·)` read off a trajectory simulated from the proposal. A diverged
/// trajectory carries no mass.
pub fn trajectory_index_mass(traj: &Trajectory, n: usize, f_off: f64) -> f64 {
    if traj.diverged || traj.n_ut == 0 {
        0.0
    } else {
        IndexDistribution::new(traj.n_ut, f_off).mass(n)
    }
}

/// `q(n|y)` for a flipped proposal `y`, from a fresh trajectory at `y`.
pub fn reverse_index_mass(
    h: &Hamiltonian,
    y: &PhasePoint,
    n: usize,
    eps: f64,
    f_off: f64,
    n_max: usize,
    counter: &mut GradientCounter,
) -> (f64, Trajectory) {
    let traj = traj_upto_uturn(h, y, eps, n_max, counter);
    (trajectory_index_mass(&traj, n, f_off), traj)
}

pub fn draw_f_off<R: Rng + ?Sized>(range: (f64, f64), rng: &mut R) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// A NoUT proposal `x' = F(x_n)` with the terms of its MH ratio.
#[derive(Debug, Clone)]
pub struct IndexProposal {
    pub n: usize,
    pub state: PhasePoint,
    /// `log q(n|x)`.
    pub forward_log_mass: f64,
    /// `log q(n|x')`; `-inf` on a sub-u-turn or a diverged reverse trajectory.
    pub reverse_log_mass: f64,
    pub reverse: Trajectory,
    /// `log [π̃(x') q(n|x') / π̃(x) q(n|x)]`, `-inf` when either trajectory
    /// diverged.
    pub log_ratio: f64,
}

impl IndexProposal {
    pub fn sub_uturn(&self) -> bool {
        self.reverse_log_mass == f64::NEG_INFINITY
    }

    pub fn alpha(&self) -> f64 {
        self.log_ratio.min(0.0).exp()
    }

    /// `log(1 - α)`, accurate when `α` is close to 1.
    pub fn log1m_alpha(&self) -> f64 {
        (-(self.log_ratio.min(0.0)).exp_m1()).ln()
    }
}

/// Builds the proposal at index `n` of `forward` and simulates its reverse
/// trajectory. Requires `1 ≤ forward.n_ut` and `n ≤ forward.n_ut`.
#[allow(clippy::too_many_arguments)]
pub fn propose_index(
    h: &Hamiltonian,
    forward: &Trajectory,
    n: usize,
    f_off: f64,
    eps: f64,
    n_max: usize,
    cache_reverse: bool,
    counter: &mut GradientCounter,
) -> IndexProposal {
    let x = forward.start();
    let forward_log_mass = IndexDistribution::new(forward.n_ut, f_off).log_mass(n);
    let reverse = if cache_reverse {
        reverse_trajectory_cached(h, forward, n, eps, n_max, counter)
    } else {
        traj_upto_uturn(h, &flip(&forward.states[n]), eps, n_max, counter)
    };
    let state = reverse.states[0].clone();
    let reverse_log_mass = trajectory_index_mass(&reverse, n, f_off).ln();
    let log_ratio = if forward.diverged || reverse_log_mass == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        h.gibbs_logdensity(&state) + reverse_log_mass - h.gibbs_logdensity(x) - forward_log_mass
    };
    IndexProposal { n, state, forward_log_mass, reverse_log_mass, reverse, log_ratio }
}

/// Settings of the fixed-step NoUT sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoutSettings {
    pub eps: f64,
    pub f_off_range: (f64, f64),
    pub n_max: usize,
    pub cache_reverse: bool,
}

impl NoutSettings {
    pub fn new(eps: f64) -> Self {
        Self { eps, f_off_range: DEFAULT_F_OFF_RANGE, n_max: DEFAULT_N_MAX, cache_reverse: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoutInfo {
    pub f_off: f64,
    pub n_ut: usize,
    pub n: Option<usize>,
    pub accepted: bool,
    pub sub_uturn: bool,
    pub diverged: bool,
    pub capped: bool,
    pub alpha: f64,
}

/// One NoUT Metropolis step. The momentum of `x` must already be resampled.
pub fn nout_step<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x: &PhasePoint,
    settings: &NoutSettings,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> (PhasePoint, NoutInfo) {
    let f_off = draw_f_off(settings.f_off_range, rng);
    let forward = traj_upto_uturn(h, x, settings.eps, settings.n_max, counter);
    let mut info = NoutInfo {
        f_off,
        n_ut: forward.n_ut,
        n: None,
        accepted: false,
        sub_uturn: false,
        diverged: forward.diverged,
        capped: forward.capped,
        alpha: 0.0,
    };
    if forward.n_ut == 0 {
        return (x.clone(), info);
    }
    let n = IndexDistribution::new(forward.n_ut, f_off).sample(rng);
    let prop = propose_index(h, &forward, n, f_off, settings.eps, settings.n_max, settings.cache_reverse, counter);
    info.n = Some(n);
    info.sub_uturn = prop.sub_uturn();
    info.diverged |= prop.reverse.diverged;
    info.alpha = prop.alpha();
    if rng.random::<f64>().ln() < prop.log_ratio {
        info.accepted = true;
        (prop.state, info)
    } else {
        (x.clone(), info)
    }
}
