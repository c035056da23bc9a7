use rand::Rng;

use super::{AtlasConfig, Branch, BranchOutcome};
use crate::curvature::step_size_distribution;
use crate::dynamics::{GradientCounter, Hamiltonian, PhasePoint};
use crate::uturn::{draw_f_off, propose_index, traj_upto_uturn, IndexDistribution};

/// One ATLAS-Simple iteration: a step size is drawn from `q(ε|x)`, then a
/// NoUT proposal at that step size is corrected for both `q(ε|·)` and
/// `q(n|·)`.
pub fn atlas_simple_step<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x: &PhasePoint,
    cfg: &AtlasConfig,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> (PhasePoint, BranchOutcome) {
    let f_off = draw_f_off(cfg.f_off_range, rng);
    let eps_init = 2.0 * cfg.eps0;
    let q_x = step_size_distribution(h, std::slice::from_ref(x), eps_init, &cfg.curvature, counter);
    let eps = q_x.dist.sample(rng);
    let fwd = traj_upto_uturn(h, x, eps, cfg.n_max, counter);
    let mut out = BranchOutcome::new(Branch::NoutReject, eps);
    out.n_ut = Some(fwd.n_ut);
    out.f_off = Some(f_off);
    out.diverged = fwd.diverged;
    out.capped = fwd.capped;
    if fwd.n_ut == 0 {
        return (x.clone(), out);
    }
    let n = IndexDistribution::new(fwd.n_ut, f_off).sample(rng);
    out.n1 = Some(n);
    let prop = propose_index(h, &fwd, n, f_off, eps, cfg.n_max, cfg.cache_reverse, counter);
    out.diverged |= prop.reverse.diverged;
    if prop.sub_uturn() {
        return (x.clone(), out.decided(f64::NEG_INFINITY, false, Branch::NoutAccept, Branch::NoutSubUturnReject));
    }
    let q_y = step_size_distribution(h, std::slice::from_ref(&prop.state), eps_init, &cfg.curvature, counter);
    let log_ratio = prop.log_ratio + q_y.dist.logpdf(eps) - q_x.dist.logpdf(eps);
    let accepted = rng.random::<f64>().ln() < log_ratio;
    let out = out.decided(log_ratio, accepted, Branch::NoutAccept, Branch::NoutReject);
    (if accepted { prop.state } else { x.clone() }, out)
}
