use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curvature::{CurvatureSettings, PowerSettings};
use crate::error::{AtlasError, Result};
use crate::samplers::{AtlasConfig, ChainSettings, SamplerKind, WarmupSettings};
use crate::uturn::{DEFAULT_F_OFF_RANGE, DEFAULT_N_MAX};

/// Everything needed to reproduce a run. Loadable from TOML; every field
/// has a default so a config file may set only what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub sampler: SamplerKind,
    pub chains: usize,
    pub draws: usize,
    /// Dual-averaging iterations.
    pub warmup_iters: usize,
    pub seed: u64,
    pub eps0_override: Option<f64>,
    pub eps0_scale: f64,
    /// Defaults to 0.65 for the ATLAS samplers and 0.8 for the baselines.
    pub target_accept: Option<f64>,
    pub output_dir: PathBuf,
    /// Worker threads; all available processors when unset.
    pub workers: Option<usize>,
    pub tune_leapfrog: usize,
    pub qg_proposals: usize,
    /// Build one `q_g` from the U-turn lengths of all chains. Per-chain
    /// draws then depend on the chain count.
    pub pool_qg: bool,
    pub hmc_steps: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub f_off_lo: f64,
    pub f_off_hi: f64,
    pub n_h: usize,
    pub n_try: usize,
    pub r: f64,
    pub sigma_star: f64,
    pub max_halvings: usize,
    pub power_max_iters: usize,
    pub power_tol: f64,
    pub cache_reverse: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let curv = CurvatureSettings::default();
        let warm = WarmupSettings::default();
        Self {
            model: "std_normal-10".into(),
            sampler: SamplerKind::Atlas,
            chains: 4,
            draws: 1000,
            warmup_iters: warm.tune_iters,
            seed: 0,
            eps0_override: None,
            eps0_scale: 1.0,
            target_accept: None,
            output_dir: PathBuf::from("runs"),
            workers: None,
            tune_leapfrog: warm.n_leapfrog,
            qg_proposals: warm.qg_proposals,
            pool_qg: false,
            hmc_steps: 20,
            n_min: 3,
            n_max: DEFAULT_N_MAX,
            f_off_lo: DEFAULT_F_OFF_RANGE.0,
            f_off_hi: DEFAULT_F_OFF_RANGE.1,
            n_h: curv.n_h,
            n_try: curv.n_try,
            r: curv.r,
            sigma_star: curv.sigma_star,
            max_halvings: curv.max_halvings,
            power_max_iters: curv.power.max_iters,
            power_tol: curv.power.tol,
            cache_reverse: false,
        }
    }
}

impl RunConfig {
    pub fn new(model: impl Into<String>, sampler: SamplerKind, chains: usize, draws: usize, seed: u64) -> Self {
        Self { model: model.into(), sampler, chains, draws, seed, ..Self::default() }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| AtlasError::Config(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AtlasError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AtlasError::InvalidParameter(m.to_string()));
        if self.chains < 1 || self.draws < 1 {
            return bad("chains and draws must be at least 1");
        }
        if !(self.eps0_scale > 0.0 && self.eps0_scale.is_finite()) {
            return bad("eps0_scale must be positive");
        }
        if let Some(e) = self.eps0_override {
            if !(e > 0.0 && e.is_finite()) {
                return bad("eps0_override must be positive");
            }
        }
        if let Some(t) = self.target_accept {
            if !(t > 0.0 && t < 1.0) {
                return bad("target_accept must lie in (0, 1)");
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        if self.hmc_steps < 1 || self.tune_leapfrog < 1 {
            return bad("leapfrog step counts must be at least 1");
        }
        self.atlas_config(1.0).validate()
    }

    pub fn atlas_config(&self, eps0: f64) -> AtlasConfig {
        AtlasConfig {
            n_min: self.n_min,
            f_off_range: (self.f_off_lo, self.f_off_hi),
            n_max: self.n_max,
            curvature: CurvatureSettings {
                n_h: self.n_h,
                n_try: self.n_try,
                r: self.r,
                sigma_star: self.sigma_star,
                max_halvings: self.max_halvings,
                power: PowerSettings {
                    max_iters: self.power_max_iters,
                    tol: self.power_tol,
                    ..PowerSettings::default()
                },
            },
            cache_reverse: self.cache_reverse,
            ..AtlasConfig::new(eps0)
        }
    }

    pub fn chain_settings(&self) -> ChainSettings {
        ChainSettings {
            kind: self.sampler,
            atlas: self.atlas_config(1.0),
            hmc_steps: self.hmc_steps,
            warmup: WarmupSettings {
                tune_iters: self.warmup_iters,
                n_leapfrog: self.tune_leapfrog,
                target_accept: self.target_accept,
                qg_proposals: self.qg_proposals,
                eps0_override: self.eps0_override,
                eps0_scale: self.eps0_scale,
            },
            draws: self.draws,
            seed: self.seed,
            initial: None,
        }
    }

    /// Default run directory under `output_dir`.
    pub fn run_dir(&self) -> PathBuf {
        let mut name = format!("{}_{}_s{}", self.model, self.sampler, self.seed);
        if self.eps0_scale != 1.0 {
            name.push_str(&format!("_x{}", self.eps0_scale));
        }
        self.output_dir.join(name)
    }
}
