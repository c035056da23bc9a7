use rand::Rng;

use super::{AtlasConfig, Branch, BranchOutcome};
use crate::curvature::{step_size_distribution, stepsize_dist_hmc, StepSizeOutcome};
use crate::dynamics::{flip, GradientCounter, Hamiltonian, PhasePoint};
use crate::uturn::{draw_f_off, propose_index, traj_upto_uturn, IndexDistribution, IndexProposal, Trajectory};

/// Why a delayed proposal was rejected before its MH test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayedRejection {
    /// The trajectory from the start is too short for a NoUT proposal.
    ShortTrajectory,
    IndexOutsideSupport,
    SubUturn,
    ZeroSteps,
    Diverged,
    GhostShort,
    GhostIndexOutsideSupport,
    GhostSubUturn,
}

/// Result of a second-stage proposal `x'' = F L^{n₂}_{ε₂}(x)`.
#[derive(Debug, Clone)]
pub struct DelayedEvaluation {
    pub proposal: PhasePoint,
    pub n2: usize,
    /// `log α₂` before truncation at zero.
    pub log_ratio: f64,
}

/// Second stage given the rejected first proposal. All randomness is in the
/// labels `(f_off, n₁, ε₂)`, so reversing the move is a deterministic replay.
#[allow(clippy::too_many_arguments)]
fn second_stage(
    h: &Hamiltonian,
    x: &PhasePoint,
    first: &IndexProposal,
    q_x: &StepSizeOutcome,
    n1: usize,
    f_off: f64,
    eps2: f64,
    cfg: &AtlasConfig,
    counter: &mut GradientCounter,
) -> Result<DelayedEvaluation, DelayedRejection> {
    let n2 = (cfg.eps0 * n1 as f64 / eps2).floor();
    if !(n2 >= 1.0) {
        return Err(DelayedRejection::ZeroSteps);
    }
    let n2 = n2 as usize;
    let proposal = h.leapfrog(x, eps2, n2, counter).map_err(|_| DelayedRejection::Diverged)?;
    let proposal = flip(&proposal);

    let ghost = traj_upto_uturn(h, &proposal, cfg.eps0, cfg.n_max, counter);
    if ghost.n_ut <= cfg.n_min {
        return Err(DelayedRejection::GhostShort);
    }
    if !IndexDistribution::new(ghost.n_ut, f_off).contains(n1) {
        return Err(DelayedRejection::GhostIndexOutsideSupport);
    }
    let ghost_first = first_stage(h, &ghost, n1, f_off, cfg, counter);
    if ghost_first.sub_uturn() {
        return Err(DelayedRejection::GhostSubUturn);
    }
    let q_prop = step_size_distribution(h, &ghost.states, cfg.eps0, &cfg.curvature, counter);

    let num = h.gibbs_logdensity(&proposal)
        + q_prop.dist.logpdf(eps2)
        + ghost_first.forward_log_mass
        + ghost_first.log1m_alpha();
    let den = h.gibbs_logdensity(x) + q_x.dist.logpdf(eps2) + first.forward_log_mass + first.log1m_alpha();
    let log_ratio = if num == f64::NEG_INFINITY { f64::NEG_INFINITY } else { num - den };
    Ok(DelayedEvaluation { proposal, n2, log_ratio })
}

/// NoUT proposal at index `n1`. From a proposal whose own trajectory turns
/// within `n_min` steps the kernel never makes a NoUT proposal, so the
/// reverse move has zero mass there, exactly like a sub-u-turn.
fn first_stage(
    h: &Hamiltonian,
    fwd: &Trajectory,
    n1: usize,
    f_off: f64,
    cfg: &AtlasConfig,
    counter: &mut GradientCounter,
) -> IndexProposal {
    let mut p = propose_index(h, fwd, n1, f_off, cfg.eps0, cfg.n_max, cfg.cache_reverse, counter);
    if p.reverse.n_ut <= cfg.n_min {
        p.reverse_log_mass = f64::NEG_INFINITY;
        p.log_ratio = f64::NEG_INFINITY;
    }
    p
}

/// Recomputes the delayed proposal from `x` for fixed labels. Used to check
/// that an accepted move is balanced by its reverse.
pub fn evaluate_delayed(
    h: &Hamiltonian,
    x: &PhasePoint,
    f_off: f64,
    n1: usize,
    eps2: f64,
    cfg: &AtlasConfig,
    counter: &mut GradientCounter,
) -> Result<DelayedEvaluation, DelayedRejection> {
    let fwd = traj_upto_uturn(h, x, cfg.eps0, cfg.n_max, counter);
    if fwd.n_ut <= cfg.n_min {
        return Err(DelayedRejection::ShortTrajectory);
    }
    if !IndexDistribution::new(fwd.n_ut, f_off).contains(n1) {
        return Err(DelayedRejection::IndexOutsideSupport);
    }
    let first = first_stage(h, &fwd, n1, f_off, cfg, counter);
    if first.sub_uturn() {
        return Err(DelayedRejection::SubUturn);
    }
    let q_x = step_size_distribution(h, &fwd.states, cfg.eps0, &cfg.curvature, counter);
    second_stage(h, x, &first, &q_x, n1, f_off, eps2, cfg, counter)
}

fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    rng.random::<f64>().ln() < log_ratio
}

/// One ATLAS iteration. The momentum of `x` must already be resampled.
pub fn atlas_step<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x: &PhasePoint,
    cfg: &AtlasConfig,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> (PhasePoint, BranchOutcome) {
    let f_off = draw_f_off(cfg.f_off_range, rng);
    let fwd = traj_upto_uturn(h, x, cfg.eps0, cfg.n_max, counter);
    let mut out = BranchOutcome::new(Branch::NoutReject, cfg.eps0);
    out.n_ut = Some(fwd.n_ut);
    out.f_off = Some(f_off);
    out.diverged = fwd.diverged;
    out.capped = fwd.capped;

    if fwd.n_ut <= cfg.n_min {
        return upon_failure(h, x, cfg, out, rng, counter);
    }

    let n1 = IndexDistribution::new(fwd.n_ut, f_off).sample(rng);
    out.n1 = Some(n1);
    let first = first_stage(h, &fwd, n1, f_off, cfg, counter);
    out.diverged |= first.reverse.diverged;
    if accept(rng, first.log_ratio) {
        let out = out.decided(first.log_ratio, true, Branch::NoutAccept, Branch::NoutReject);
        return (first.state, out);
    }
    if first.sub_uturn() {
        let out = out.decided(first.log_ratio, false, Branch::NoutAccept, Branch::NoutSubUturnReject);
        return (x.clone(), out);
    }

    let q_x = step_size_distribution(h, &fwd.states, cfg.eps0, &cfg.curvature, counter);
    let eps2 = q_x.dist.sample(rng);
    out.eps_used = eps2;
    match second_stage(h, x, &first, &q_x, n1, f_off, eps2, cfg, counter) {
        Ok(eval) => {
            out.n2 = Some(eval.n2);
            let accepted = accept(rng, eval.log_ratio);
            let out = out.decided(eval.log_ratio, accepted, Branch::DrAccept, Branch::DrReject);
            if accepted {
                (eval.proposal, out)
            } else {
                (x.clone(), out)
            }
        }
        Err(reason) => {
            let n2 = (cfg.eps0 * n1 as f64 / eps2).floor() as usize;
            out.n2 = Some(n2);
            out.diverged |= reason == DelayedRejection::Diverged;
            (x.clone(), out.decided(f64::NEG_INFINITY, false, Branch::DrAccept, Branch::DrReject))
        }
    }
}

/// Delayed proposal made when the baseline trajectory turns within `n_min`
/// steps.
fn upon_failure<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x: &PhasePoint,
    cfg: &AtlasConfig,
    mut out: BranchOutcome,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> (PhasePoint, BranchOutcome) {
    let q_x = stepsize_dist_hmc(h, x, cfg.eps0, &cfg.curvature, counter);
    let eps3 = q_x.dist.sample(rng);
    let n3 = cfg.qg.sample(rng);
    out.eps_used = eps3;
    out.n3 = Some(n3);
    let reject = |out: BranchOutcome| (x.clone(), out.decided(f64::NEG_INFINITY, false, Branch::DrFailAccept, Branch::DrFailReject));

    let Ok(proposal) = h.leapfrog(x, eps3, n3, counter) else {
        out.diverged = true;
        return reject(out);
    };
    let proposal = flip(&proposal);
    let ghost = traj_upto_uturn(h, &proposal, cfg.eps0, cfg.n_max, counter);
    if ghost.n_ut > cfg.n_min {
        return reject(out);
    }
    let q_prop = stepsize_dist_hmc(h, &proposal, cfg.eps0, &cfg.curvature, counter);
    let log_ratio = h.gibbs_logdensity(&proposal) + q_prop.dist.logpdf(eps3)
        - h.gibbs_logdensity(x)
        - q_x.dist.logpdf(eps3);
    let accepted = accept(rng, log_ratio);
    let out = out.decided(log_ratio, accepted, Branch::DrFailAccept, Branch::DrFailReject);
    if accepted {
        (proposal, out)
    } else {
        (x.clone(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{resample_momentum, MassMatrix};
    use crate::targets::{DiagonalNormal, Funnel, Linear};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn easy_target_mostly_takes_the_first_branch() {
        let model = DiagonalNormal::standard(50).unwrap();
        let mass = MassMatrix::identity(50);
        let h = Hamiltonian::new(&model, &mass);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = GradientCounter::new();
        let x0 = h.point(vec![0.1; 50], vec![0.0; 50], &mut c);
        let tuned = crate::warmup::tune_eps0(&h, &x0, 200, 20, 0.65, &mut rng, &mut c);
        let cfg = AtlasConfig::new(tuned.eps0);
        let mut x = tuned.state;
        // branch (a): the forward trajectory clears n_min, whatever the verdict
        let mut first = 0;
        for _ in 0..2000 {
            x = resample_momentum(&x, &mass, &mut rng);
            let (next, out) = atlas_step(&h, &x, &cfg, &mut rng, &mut c);
            if !matches!(out.branch, Branch::DrFailAccept | Branch::DrFailReject) {
                first += 1;
            }
            x = next;
        }
        assert!(first > 1600, "{first}");
    }

    #[test]
    fn funnel_neck_triggers_delayed_rejection_upon_failure() {
        let model = Funnel::new(11).unwrap();
        let mass = MassMatrix::identity(11);
        let h = Hamiltonian::new(&model, &mass);
        let cfg = AtlasConfig::new(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut c = GradientCounter::new();
        let mut theta = vec![0.01; 11];
        theta[0] = -6.0;
        let mut x = h.point(theta, vec![0.0; 11], &mut c);
        let mut seen = false;
        for _ in 0..100 {
            x = resample_momentum(&x, &mass, &mut rng);
            let (next, out) = atlas_step(&h, &x, &cfg, &mut rng, &mut c);
            seen |= matches!(out.branch, Branch::DrFailAccept | Branch::DrFailReject);
            x = next;
        }
        assert!(seen);
    }

    #[test]
    fn flat_target_never_reaches_delayed_proposal() {
        // Unit first-stage ratio: α₁ = 1, so no DR.
        let model = Linear::flat(2);
        let mass = MassMatrix::identity(2);
        let h = Hamiltonian::new(&model, &mass);
        let cfg = AtlasConfig { n_max: 30, ..AtlasConfig::new(0.2) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = GradientCounter::new();
        let mut x = h.point(vec![0.0; 2], vec![0.0; 2], &mut c);
        for _ in 0..200 {
            x = resample_momentum(&x, &mass, &mut rng);
            let (next, out) = atlas_step(&h, &x, &cfg, &mut rng, &mut c);
            assert_eq!(out.branch, Branch::NoutAccept);
            x = next;
        }
    }
}
