//! Sampler kernels: ATLAS, ATLAS-Simple and the fixed-step baselines.

mod atlas;
mod chain;
mod hmc;
mod simple;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureSettings;
use crate::dynamics::{GradientCounter, Hamiltonian, PhasePoint};
use crate::error::{AtlasError, Result};
use crate::uturn::{nout_step, NoutSettings, DEFAULT_F_OFF_RANGE, DEFAULT_N_MAX};

pub use atlas::{atlas_step, evaluate_delayed, DelayedEvaluation, DelayedRejection};
pub use chain::{
    chain_rng, qg_or_default,
    initial_point, run_chain, sample_chain, warmup_chain, ChainSettings, ChainWarmup, WarmupSettings,
};
pub use hmc::hmc_step;
pub use simple::atlas_simple_step;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Atlas,
    AtlasSimple,
    NoutFixed,
    HmcFixed,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] =
        [SamplerKind::Atlas, SamplerKind::AtlasSimple, SamplerKind::NoutFixed, SamplerKind::HmcFixed];

    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerKind::Atlas => "atlas",
            SamplerKind::AtlasSimple => "atlas-simple",
            SamplerKind::NoutFixed => "nout-fixed",
            SamplerKind::HmcFixed => "hmc-fixed",
        }
    }

    /// Dual-averaging target used when none is configured.
    pub fn default_target_accept(&self) -> f64 {
        match self {
            SamplerKind::Atlas | SamplerKind::AtlasSimple => 0.65,
            SamplerKind::NoutFixed | SamplerKind::HmcFixed => 0.8,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| AtlasError::UnknownSampler(s.to_string()))
    }
}

/// Which leaf of the kernel produced the next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    NoutAccept,
    NoutReject,
    #[serde(rename = "nout-subuturn-reject")]
    NoutSubUturnReject,
    DrAccept,
    DrReject,
    #[serde(rename = "drfail-accept")]
    DrFailAccept,
    #[serde(rename = "drfail-reject")]
    DrFailReject,
    HmcAccept,
    HmcReject,
}

impl Branch {
    pub const ALL: [Branch; 9] = [
        Branch::NoutAccept,
        Branch::NoutReject,
        Branch::NoutSubUturnReject,
        Branch::DrAccept,
        Branch::DrReject,
        Branch::DrFailAccept,
        Branch::DrFailReject,
        Branch::HmcAccept,
        Branch::HmcReject,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::NoutAccept => "nout-accept",
            Branch::NoutReject => "nout-reject",
            Branch::NoutSubUturnReject => "nout-subuturn-reject",
            Branch::DrAccept => "dr-accept",
            Branch::DrReject => "dr-reject",
            Branch::DrFailAccept => "drfail-accept",
            Branch::DrFailReject => "drfail-reject",
            Branch::HmcAccept => "hmc-accept",
            Branch::HmcReject => "hmc-reject",
        }
    }

    pub fn accepted(&self) -> bool {
        matches!(self, Branch::NoutAccept | Branch::DrAccept | Branch::DrFailAccept | Branch::HmcAccept)
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Branch {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| AtlasError::Config(format!("unknown branch '{s}'")))
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    pub branch: Branch,
    /// U-turn length of the trajectory from the current state.
    pub n_ut: Option<usize>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub n3: Option<usize>,
    pub f_off: Option<f64>,
    /// Step size of the proposal that was decided on.
    pub eps_used: f64,
    pub grad_cost: u64,
    pub alpha: f64,
    /// Log MH ratio of the decisive proposal, `-inf` if none was evaluated.
    pub log_ratio: f64,
    pub diverged: bool,
    pub capped: bool,
}

impl BranchOutcome {
    pub fn new(branch: Branch, eps_used: f64) -> Self {
        Self {
            branch,
            n_ut: None,
            n1: None,
            n2: None,
            n3: None,
            f_off: None,
            eps_used,
            grad_cost: 0,
            alpha: 0.0,
            log_ratio: f64::NEG_INFINITY,
            diverged: false,
            capped: false,
        }
    }

    fn decided(mut self, log_ratio: f64, accepted: bool, accept: Branch, reject: Branch) -> Self {
        self.log_ratio = log_ratio;
        self.alpha = log_ratio.min(0.0).exp();
        self.branch = if accepted { accept } else { reject };
        self
    }
}

/// `q_g(n)`, uniform on `{lo, …, hi}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalTrajectoryDistribution {
    pub lo: usize,
    pub hi: usize,
}

impl GlobalTrajectoryDistribution {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo < 1 || lo > hi {
            return Err(AtlasError::InvalidParameter(format!("q_g support {{{lo}..{hi}}} is invalid")));
        }
        Ok(Self { lo, hi })
    }

    pub fn mass(&self, n: usize) -> f64 {
        if (self.lo..=self.hi).contains(&n) {
            1.0 / (self.hi - self.lo + 1) as f64
        } else {
            0.0
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

impl Default for GlobalTrajectoryDistribution {
    fn default() -> Self {
        Self { lo: 1, hi: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtlasConfig {
    /// Baseline step size `ε₀`.
    pub eps0: f64,
    pub n_min: usize,
    pub f_off_range: (f64, f64),
    pub n_max: usize,
    pub curvature: CurvatureSettings,
    pub qg: GlobalTrajectoryDistribution,
    /// Reuse forward states for reverse trajectories.
    pub cache_reverse: bool,
}

impl AtlasConfig {
    pub fn new(eps0: f64) -> Self {
        Self {
            eps0,
            n_min: 3,
            f_off_range: DEFAULT_F_OFF_RANGE,
            n_max: DEFAULT_N_MAX,
            curvature: CurvatureSettings::default(),
            qg: GlobalTrajectoryDistribution::default(),
            cache_reverse: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.f_off_range;
        let bad = |m: &str| Err(AtlasError::InvalidParameter(m.to_string()));
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return bad("eps0 must be positive");
        }
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad("f_off range must satisfy 0 <= lo < hi <= 1");
        }
        if self.n_min < 1 || self.n_max <= self.n_min {
            return bad("need 1 <= n_min < n_max");
        }
        if self.curvature.n_h < 2 || !(self.curvature.sigma_star > 1.0) {
            return bad("need N_H >= 2 and sigma_star > 1");
        }
        Ok(())
    }

    pub fn nout(&self) -> NoutSettings {
        NoutSettings {
            eps: self.eps0,
            f_off_range: self.f_off_range,
            n_max: self.n_max,
            cache_reverse: self.cache_reverse,
        }
    }
}

/// A configured transition kernel. Each step expects freshly resampled
/// momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampler {
    Atlas(AtlasConfig),
    AtlasSimple(AtlasConfig),
    Nout(NoutSettings),
    Hmc { eps: f64, n_steps: usize },
}

impl Sampler {
    pub fn kind(&self) -> SamplerKind {
        match self {
            Sampler::Atlas(_) => SamplerKind::Atlas,
            Sampler::AtlasSimple(_) => SamplerKind::AtlasSimple,
            Sampler::Nout(_) => SamplerKind::NoutFixed,
            Sampler::Hmc { .. } => SamplerKind::HmcFixed,
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        h: &Hamiltonian,
        x: &PhasePoint,
        rng: &mut R,
        counter: &mut GradientCounter,
    ) -> (PhasePoint, BranchOutcome) {
        let start = counter.count();
        let (next, mut out) = match self {
            Sampler::Atlas(cfg) => atlas_step(h, x, cfg, rng, counter),
            Sampler::AtlasSimple(cfg) => atlas_simple_step(h, x, cfg, rng, counter),
            Sampler::Nout(s) => nout_fixed_step(h, x, s, rng, counter),
            Sampler::Hmc { eps, n_steps } => hmc_step(h, x, *eps, *n_steps, rng, counter),
        };
        out.grad_cost = counter.count() - start;
        (next, out)
    }
}

fn nout_fixed_step<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x: &PhasePoint,
    s: &NoutSettings,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> (PhasePoint, BranchOutcome) {
    let (next, info) = nout_step(h, x, s, rng, counter);
    let branch = if info.accepted {
        Branch::NoutAccept
    } else if info.sub_uturn {
        Branch::NoutSubUturnReject
    } else {
        Branch::NoutReject
    };
    let mut out = BranchOutcome::new(branch, s.eps);
    out.n_ut = Some(info.n_ut);
    out.n1 = info.n;
    out.f_off = Some(info.f_off);
    out.alpha = info.alpha;
    out.log_ratio = info.alpha.ln();
    out.diverged = info.diverged;
    out.capped = info.capped;
    (next, out)
}
