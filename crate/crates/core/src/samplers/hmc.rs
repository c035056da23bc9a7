use rand::Rng;

use super::{Branch, BranchOutcome};
use crate::dynamics::{flip, GradientCounter, Hamiltonian, PhasePoint};

/// Fixed `(ε, n)` HMC with a Metropolis correction.
pub fn hmc_step<R: Rng + ?Sized>(
    h: &Hamiltonian,
    x: &PhasePoint,
    eps: f64,
    n_steps: usize,
    rng: &mut R,
    counter: &mut GradientCounter,
) -> (PhasePoint, BranchOutcome) {
    let out = BranchOutcome::new(Branch::HmcReject, eps);
    let Ok(y) = h.leapfrog(x, eps, n_steps, counter) else {
        let mut out = out;
        out.diverged = true;
        return (x.clone(), out);
    };
    let y = flip(&y);
    let log_ratio = h.gibbs_logdensity(&y) - h.gibbs_logdensity(x);
    let log_ratio = if log_ratio.is_nan() { f64::NEG_INFINITY } else { log_ratio };
    let accepted = rng.random::<f64>().ln() < log_ratio;
    let out = out.decided(log_ratio, accepted, Branch::HmcAccept, Branch::HmcReject);
    (if accepted { y } else { x.clone() }, out)
}
