use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{AtlasConfig, GlobalTrajectoryDistribution, Sampler, SamplerKind};
use crate::diagnostics::ChainRecord;
use crate::dynamics::{resample_momentum, GradientCounter, Hamiltonian, MassMatrix, PhasePoint};
use crate::error::{AtlasError, Result};
use crate::targets::Model;
use crate::uturn::NoutSettings;
use crate::warmup::{collect_uturn_lengths, qg_from_lengths, tune_eps0};

#[derive(Debug, Clone, PartialEq)]
pub struct WarmupSettings {
    /// Dual-averaging iterations.
    pub tune_iters: usize,
    /// Leapfrog steps per dual-averaging iteration.
    pub n_leapfrog: usize,
    /// Defaults to the sampler's own target.
    pub target_accept: Option<f64>,
    /// NoUT proposals used to build `q_g`.
    pub qg_proposals: usize,
    /// Replaces the tuned step; tuning is then skipped.
    pub eps0_override: Option<f64>,
    /// Multiplies the tuned (or overridden) step.
    pub eps0_scale: f64,
}

impl Default for WarmupSettings {
    fn default() -> Self {
        Self {
            tune_iters: 100,
            n_leapfrog: 20,
            target_accept: None,
            qg_proposals: 100,
            eps0_override: None,
            eps0_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSettings {
    pub kind: SamplerKind,
    /// Knobs of the ATLAS samplers; `eps0` is set by warmup.
    pub atlas: AtlasConfig,
    /// Leapfrog steps of the fixed HMC baseline.
    pub hmc_steps: usize,
    pub warmup: WarmupSettings,
    pub draws: usize,
    pub seed: u64,
    pub initial: Option<Vec<f64>>,
}

impl ChainSettings {
    pub fn new(kind: SamplerKind, draws: usize, seed: u64) -> Self {
        Self {
            kind,
            atlas: AtlasConfig::new(1.0),
            hmc_steps: 20,
            warmup: WarmupSettings::default(),
            draws,
            seed,
            initial: None,
        }
    }

    pub fn sampler(&self, eps0: f64, qg: GlobalTrajectoryDistribution) -> Sampler {
        let atlas = AtlasConfig { eps0, qg, ..self.atlas };
        match self.kind {
            SamplerKind::Atlas => Sampler::Atlas(atlas),
            SamplerKind::AtlasSimple => Sampler::AtlasSimple(atlas),
            SamplerKind::NoutFixed => Sampler::Nout(atlas.nout()),
            SamplerKind::HmcFixed => Sampler::Hmc { eps: eps0, n_steps: self.hmc_steps },
        }
    }
}

/// Chain state between warmup and sampling.
#[derive(Debug, Clone)]
pub struct ChainWarmup {
    pub chain: usize,
    pub rng: ChaCha8Rng,
    pub state: PhasePoint,
    pub eps0: f64,
    /// U-turn lengths seen at `eps0` (ATLAS only).
    pub uturn_lengths: Vec<usize>,
    pub warmup_cost: u64,
    pub warnings: Vec<String>,
}

/// Per-chain stream: the seed picks the key, the chain index the stream, so
/// a chain's draws do not depend on how many chains run.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// `θ ~ N(0, 2I)`, redrawn until the log density is finite.
pub fn initial_point<R: Rng + ?Sized>(
    h: &Hamiltonian,
    initial: Option<&[f64]>,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> Result<PhasePoint> {
    let d = h.dim();
    if let Some(theta) = initial {
        if theta.len() != d {
            return Err(AtlasError::DimensionMismatch { expected: d, got: theta.len() });
        }
        let x = h.point(theta.to_vec(), vec![0.0; d], counter);
        return if x.is_finite() { Ok(x) } else { Err(AtlasError::NonFiniteInitialPoint) };
    }
    for _ in 0..100 {
        let theta = (0..d).map(|_| std::f64::consts::SQRT_2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let x = h.point(theta, vec![0.0; d], counter);
        if x.is_finite() {
            return Ok(x);
        }
    }
    Err(AtlasError::NonFiniteInitialPoint)
}

pub fn warmup_chain(model: &dyn Model, settings: &ChainSettings, chain: usize) -> Result<ChainWarmup> {
    settings.atlas.validate().or_else(|e| match e {
        // eps0 is replaced below; only the other knobs matter here.
        AtlasError::InvalidParameter(m) if m.starts_with("eps0") => Ok(()),
        e => Err(e),
    })?;
    let w = &settings.warmup;
    if !(w.eps0_scale > 0.0 && w.eps0_scale.is_finite()) {
        return Err(AtlasError::InvalidParameter("eps0_scale must be positive".into()));
    }
    let mass = MassMatrix::identity(model.dim());
    let h = Hamiltonian::new(model, &mass);
    let mut rng = chain_rng(settings.seed, chain);
    let mut counter = GradientCounter::new();
    let mut warnings = vec![];
    let mut state = initial_point(&h, settings.initial.as_deref(), &mut rng, &mut counter)?;

    let eps0 = match w.eps0_override {
        Some(eps) if eps > 0.0 && eps.is_finite() => eps,
        Some(_) => return Err(AtlasError::InvalidParameter("eps0_override must be positive".into())),
        None => {
            let target = w.target_accept.unwrap_or(settings.kind.default_target_accept());
            let tuned = tune_eps0(&h, &state, w.tune_iters, w.n_leapfrog, target, &mut rng, &mut counter);
            if tuned.all_diverged {
                warnings.push(format!("every tuning iteration diverged; eps0 set to {}", tuned.eps0));
            }
            state = tuned.state;
            tuned.eps0
        }
    } * w.eps0_scale;

    let mut uturn_lengths = vec![];
    if settings.kind == SamplerKind::Atlas {
        let nout = NoutSettings { eps: eps0, ..settings.atlas.nout() };
        let sample = collect_uturn_lengths(&h, &state, &nout, w.qg_proposals, &mut rng, &mut counter);
        state = sample.state;
        uturn_lengths = sample.lengths;
    }
    Ok(ChainWarmup { chain, rng, state, eps0, uturn_lengths, warmup_cost: counter.count(), warnings })
}

/// `q_g` from pooled or per-chain lengths, with the default on empty input.
pub fn qg_or_default(lengths: &[usize], warnings: &mut Vec<String>) -> GlobalTrajectoryDistribution {
    qg_from_lengths(lengths).unwrap_or_else(|| {
        warnings.push("no usable u-turn length during warmup; q_g = U{1..32}".into());
        GlobalTrajectoryDistribution::default()
    })
}

pub fn sample_chain(
    model: &dyn Model,
    settings: &ChainSettings,
    warm: ChainWarmup,
    qg: Option<GlobalTrajectoryDistribution>,
) -> ChainRecord {
    let ChainWarmup { chain, mut rng, mut state, eps0, uturn_lengths, warmup_cost, mut warnings } = warm;
    let qg = match (settings.kind, qg) {
        (SamplerKind::Atlas, Some(q)) => Some(q),
        (SamplerKind::Atlas, None) => Some(qg_or_default(&uturn_lengths, &mut warnings)),
        _ => None,
    };
    let sampler = settings.sampler(eps0, qg.unwrap_or_default());
    let mass = MassMatrix::identity(model.dim());
    let h = Hamiltonian::new(model, &mass);
    let mut counter = GradientCounter::new();
    let mut draws = Vec::with_capacity(settings.draws);
    let mut outcomes = Vec::with_capacity(settings.draws);
    for _ in 0..settings.draws {
        let x = resample_momentum(&state, &mass, &mut rng);
        let (next, out) = sampler.step(&h, &x, &mut rng, &mut counter);
        draws.push(next.theta.clone());
        outcomes.push(out);
        state = next;
    }
    ChainRecord {
        model: model.name().to_string(),
        sampler: settings.kind,
        seed: settings.seed,
        chain,
        eps0,
        qg,
        draws,
        outcomes,
        warmup_cost,
        sampling_cost: counter.count(),
        warnings,
    }
}

/// Warmup followed by `settings.draws` iterations, each a momentum refresh
/// and one kernel step.
pub fn run_chain(model: &dyn Model, settings: &ChainSettings, chain: usize) -> Result<ChainRecord> {
    let warm = warmup_chain(model, settings, chain)?;
    Ok(sample_chain(model, settings, warm, None))
}
