//! ATLAS: Hamiltonian Monte Carlo that adapts both the leapfrog step size and
//! the trajectory length at every iteration.
//!
//! The step size is drawn from a lognormal law centred on the largest stable
//! leapfrog step, estimated from a low-rank (BFGS) Hessian approximation and
//! power iteration. Trajectory lengths come from a no-U-turn rule. Both are
//! combined inside a delayed-rejection kernel so that the adaptive machinery
//! only runs after a cheap fixed-step proposal is rejected.
//!
//! Module map:
//! - [`targets`]: differentiable benchmark densities with reference moments.
//! - [`dynamics`]: phase-space points, leapfrog, momentum flip.
//! - [`uturn`]: U-turn trajectories, index proposals and the fixed-step sampler.
//! - [`curvature`]: Hessian approximation, power iteration, step-size law.
//! - [`samplers`]: ATLAS, ATLAS-Simple, baselines and the chain driver.
//! - [`warmup`]: dual averaging for the baseline step and the global length law.
//! - [`diagnostics`]: zERR/zRMSE, ESS, split-R̂ and run summaries.
//! - [`harness`]: run configuration, file formats and experiment recipes.

pub mod curvature;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod samplers;
pub mod targets;
pub mod uturn;
pub mod warmup;

pub use error::{AtlasError, Result};
