//! Desk-scale experiment matrices with pass/fail thresholds.
//!
//! Budgets: complex targets use 8 chains × 20000 draws, Gaussian moment
//! tests 32 chains × 2000 draws. `RecipeOptions::scale` shrinks the draw
//! counts for smoke runs; the thresholds are only meaningful at scale 1.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use super::config::RunConfig;
use super::runner::{run_chains, write_run, RunResult};
use crate::diagnostics::{mean, moment_checks, variance, ChainRecord, MomentCheck};
use crate::error::{AtlasError, Result};
use crate::samplers::SamplerKind;
use crate::targets::{model_from_name, AnalyticMoments};

/// Multiple of the Monte Carlo standard error allowed in moment tests.
pub const MCSE_K: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    ComplexAccuracy,
    BaselineCost,
    StepsizeRobustness,
}

impl Recipe {
    pub const ALL: [Recipe; 3] = [Recipe::ComplexAccuracy, Recipe::BaselineCost, Recipe::StepsizeRobustness];

    pub fn as_str(&self) -> &'static str {
        match self {
            Recipe::ComplexAccuracy => "complex-accuracy",
            Recipe::BaselineCost => "baseline-cost",
            Recipe::StepsizeRobustness => "stepsize-robustness",
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Recipe {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| AtlasError::Config(format!("unknown recipe `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecipeOptions {
    pub seed: u64,
    pub workers: Option<usize>,
    /// Multiplies every draw count.
    pub scale: f64,
    /// When set, every run is written under `<dir>/<recipe>/`.
    pub output_dir: Option<PathBuf>,
}

impl Default for RecipeOptions {
    fn default() -> Self {
        Self { seed: 20240601, workers: None, scale: 1.0, output_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    /// Reported but never counted as a failure.
    pub informational: bool,
    pub details: Vec<String>,
}

impl CriterionResult {
    fn new(id: u32, name: &str) -> Self {
        Self { id, name: name.into(), pass: true, informational: false, details: vec![] }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.pass &= ok;
        self.details.push(format!("{} {detail}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, detail: String) {
        self.details.push(format!("     {detail}"));
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match (self.informational, self.pass) {
            (true, _) => "INFO",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        };
        write!(f, "{verdict} criterion {}: {}", self.id, self.name)?;
        for d in &self.details {
            write!(f, "\n    {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RecipeReport {
    pub recipe: Recipe,
    pub results: Vec<CriterionResult>,
}

impl RecipeReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.informational || r.pass)
    }
}

pub fn run_recipe(recipe: Recipe, opts: &RecipeOptions) -> Result<RecipeReport> {
    let results = match recipe {
        Recipe::ComplexAccuracy => complex_accuracy(opts)?,
        Recipe::BaselineCost => baseline_cost(opts)?,
        Recipe::StepsizeRobustness => stepsize_robustness(opts)?,
    };
    Ok(RecipeReport { recipe, results })
}

fn config(opts: &RecipeOptions, model: &str, sampler: SamplerKind, chains: usize, draws: usize) -> RunConfig {
    let draws = ((draws as f64 * opts.scale).round() as usize).max(10);
    RunConfig { workers: opts.workers, ..RunConfig::new(model, sampler, chains, draws, opts.seed) }
}

fn execute(opts: &RecipeOptions, recipe: Recipe, config: &RunConfig) -> Result<RunResult> {
    let run = run_chains(config)?;
    if let Some(dir) = &opts.output_dir {
        let name = config.run_dir().file_name().map(PathBuf::from).unwrap_or_default();
        write_run(&dir.join(recipe.as_str()).join(name), &run)?;
    }
    Ok(run)
}

fn label(c: &RunConfig) -> String {
    let mut s = format!("{} on {}", c.sampler, c.model);
    if c.eps0_scale != 1.0 {
        s.push_str(&format!(" at {}x eps0", c.eps0_scale));
    }
    s
}

fn reference(model: &str) -> Result<AnalyticMoments> {
    model_from_name(model)?.moments().ok_or_else(|| AtlasError::NoReferenceMoments(model.into()))
}

fn pooled_column(records: &[ChainRecord], d: usize) -> Vec<f64> {
    records.iter().flat_map(|r| r.column(d)).collect()
}

fn chain_failures(c: &mut CriterionResult, run: &RunResult) {
    c.check(run.failures.is_empty(), format!("{}: {} of {} chains failed", label(&run.config), run.failures.len(), run.config.chains));
}

/// Worst `|zERR| / MCSE` over all dimensions and both moments.
fn worst_moment(checks: &(Vec<MomentCheck>, Vec<MomentCheck>)) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (name, cs) in [("theta", &checks.0), ("theta^2", &checks.1)] {
        for (d, c) in cs.iter().enumerate() {
            let ratio = c.zerr.abs() / c.mcse;
            if !(ratio <= worst.0) {
                worst = (ratio, format!("{name}_{d} zerr {:+.4} mcse {:.4} ess {:.0}", c.zerr, c.mcse, c.ess));
            }
        }
    }
    worst
}

fn moment_criterion(c: &mut CriterionResult, run: &RunResult) -> Result<bool> {
    chain_failures(c, run);
    if run.records.is_empty() {
        return Ok(false);
    }
    let checks = moment_checks(&run.records, &reference(&run.config.model)?)?;
    let ok = checks.0.iter().chain(&checks.1).all(|m| m.within(MCSE_K));
    let (ratio, at) = worst_moment(&checks);
    c.check(ok, format!("{}: worst |zerr|/mcse = {ratio:.2} (limit {MCSE_K}) at {at}", label(&run.config)));
    Ok(ok)
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

/// Funnel and Rosenbrock marginals.
pub fn complex_accuracy(opts: &RecipeOptions) -> Result<Vec<CriterionResult>> {
    let recipe = Recipe::ComplexAccuracy;
    let mut c1 = CriterionResult::new(1, "funnel-11 accuracy, fixed-step NoUT fails");
    let atlas = execute(opts, recipe, &config(opts, "funnel-11", SamplerKind::Atlas, 8, 20000))?;
    chain_failures(&mut c1, &atlas);
    let x0 = pooled_column(&atlas.records, 0);
    let (m, sd) = (mean(&x0), variance(&x0).sqrt());
    c1.check(in_range(m, -0.3, 0.3), format!("atlas theta_0 mean {m:+.4} in [-0.3, 0.3]"));
    c1.check(in_range(sd, 2.7, 3.3), format!("atlas theta_0 sd {sd:.4} in [2.7, 3.3]"));
    let nout = execute(opts, recipe, &config(opts, "funnel-11", SamplerKind::NoutFixed, 8, 20000))?;
    chain_failures(&mut c1, &nout);
    let x0 = pooled_column(&nout.records, 0);
    let sd = variance(&x0).sqrt();
    c1.check(sd < 2.7, format!("nout-fixed theta_0 sd {sd:.4} < 2.7"));

    let mut c2 = CriterionResult::new(2, "rosenbrock-2 accuracy");
    let run = execute(opts, recipe, &config(opts, "rosenbrock-2", SamplerKind::Atlas, 8, 20000))?;
    chain_failures(&mut c2, &run);
    let r = reference("rosenbrock-2")?;
    let (t1, t2) = (pooled_column(&run.records, 0), pooled_column(&run.records, 1));
    let (m1, sd1) = (mean(&t1), variance(&t1).sqrt());
    c2.check(in_range(m1, 0.85, 1.15), format!("theta_1 mean {m1:.4} in [0.85, 1.15]"));
    c2.check(in_range(sd1, 0.85, 1.15), format!("theta_1 sd {sd1:.4} in [0.85, 1.15]"));
    let sq = |xs: &[f64]| xs.iter().map(|v| v * v).collect::<Vec<_>>();
    for (name, got, want) in [
        ("theta_2 mean", mean(&t2), r.mean[1]),
        ("theta_2 sd", variance(&t2).sqrt(), r.variance[1].sqrt()),
        ("theta_1^2 mean", mean(&sq(&t1)), r.mean_sq[0]),
        ("theta_2^2 mean", mean(&sq(&t2)), r.mean_sq[1]),
    ] {
        let rel = (got - want).abs() / want.abs();
        c2.check(rel <= 0.1, format!("{name} {got:.4} vs reference {want:.4} (rel. error {rel:.3} <= 0.1)"));
    }
    Ok(vec![c1, c2])
}

/// Gaussian moment tests for both ATLAS variants and the cost ordering.
pub fn baseline_cost(opts: &RecipeOptions) -> Result<Vec<CriterionResult>> {
    let recipe = Recipe::BaselineCost;
    let mut c3 = CriterionResult::new(3, "Gaussian moments within 4 MCSE");
    for model in ["std_normal-10", "corr_normal95-20", "ill_normal-1000-20"] {
        for sampler in [SamplerKind::Atlas, SamplerKind::AtlasSimple] {
            let run = execute(opts, recipe, &config(opts, model, sampler, 32, 2000))?;
            moment_criterion(&mut c3, &run)?;
        }
    }

    let mut c4 = CriterionResult::new(4, "cost ordering on corr_normal95-50");
    let mut cost = vec![];
    for sampler in [SamplerKind::NoutFixed, SamplerKind::Atlas, SamplerKind::AtlasSimple] {
        let run = execute(opts, recipe, &config(opts, "corr_normal95-50", sampler, 32, 2000))?;
        chain_failures(&mut c4, &run);
        let total: u64 = run.records.iter().map(|r| r.sampling_cost).sum();
        c4.note(format!("{sampler}: {total} gradient evaluations"));
        cost.push(total as f64);
    }
    let (nout, atlas, simple) = (cost[0], cost[1], cost[2]);
    c4.check(nout < atlas && atlas < simple, "nout-fixed < atlas < atlas-simple".into());
    let ratio = atlas / nout;
    c4.check(ratio <= 2.5, format!("atlas / nout-fixed = {ratio:.3} <= 2.5"));
    c4.note(format!("atlas-simple / nout-fixed = {:.3}", simple / nout));
    Ok(vec![c3, c4])
}

/// ATLAS at the tuned `ε₀` and at `1.1 ε₀`; fixed-step HMC reported alongside.
pub fn stepsize_robustness(opts: &RecipeOptions) -> Result<Vec<CriterionResult>> {
    let recipe = Recipe::StepsizeRobustness;
    let mut c5 = CriterionResult::new(5, "step-size robustness on std_normal-10");
    let mut info = CriterionResult::new(5, "hmc-fixed on std_normal-10 (informational)");
    info.informational = true;
    let mut verdicts = vec![];
    for scale in [1.0, 1.1] {
        let cfg = RunConfig { eps0_scale: scale, ..config(opts, "std_normal-10", SamplerKind::Atlas, 32, 2000) };
        let run = execute(opts, recipe, &cfg)?;
        verdicts.push(moment_criterion(&mut c5, &run)?);
        let cfg = RunConfig { eps0_scale: scale, ..config(opts, "std_normal-10", SamplerKind::HmcFixed, 32, 2000) };
        let run = execute(opts, recipe, &cfg)?;
        moment_criterion(&mut info, &run)?;
    }
    c5.check(verdicts[0] == verdicts[1], "scaling eps0 by 1.1 changes no verdict".into());
    Ok(vec![c5, info])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_names_round_trip() {
        for r in Recipe::ALL {
            assert_eq!(r.as_str().parse::<Recipe>().unwrap(), r);
        }
        assert!("fig-1".parse::<Recipe>().is_err());
    }

    #[test]
    fn failing_check_fails_the_criterion() {
        let mut c = CriterionResult::new(9, "x");
        c.check(true, "fine".into());
        assert!(c.pass);
        c.check(false, "broken".into());
        assert!(!c.pass);
        let text = c.to_string();
        assert!(text.starts_with("FAIL criterion 9: x"));
        assert!(text.contains("FAIL broken"));
        let report = RecipeReport { recipe: Recipe::BaselineCost, results: vec![c.clone()] };
        assert!(!report.passed());
        c.informational = true;
        let report = RecipeReport { recipe: Recipe::BaselineCost, results: vec![c] };
        assert!(report.passed());
    }
}
