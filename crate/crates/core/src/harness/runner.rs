use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;

use super::config::RunConfig;
use super::io::{version_string, write_chain, write_manifest, ChainEntry, Manifest};
use crate::diagnostics::ChainRecord;
use crate::error::{AtlasError, Result};
use crate::samplers::{qg_or_default, run_chain, sample_chain, warmup_chain, SamplerKind};
use crate::targets::model_from_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub dim: usize,
    /// Successful chains in chain order.
    pub records: Vec<ChainRecord>,
    /// `(chain, message)` of chains that did not finish.
    pub failures: Vec<(usize, String)>,
}

impl RunResult {
    pub fn status(&self) -> RunStatus {
        match (self.records.is_empty(), self.failures.is_empty()) {
            (_, true) => RunStatus::Complete,
            (true, false) => RunStatus::Failed,
            (false, false) => RunStatus::Partial,
        }
    }

    pub fn manifest(&self, entries: Vec<ChainEntry>) -> Manifest {
        Manifest { version: version_string(), config: self.config.clone(), dim: self.dim, chains: entries }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "chain panicked".into())
}

/// Runs every chain of `config` on a bounded worker pool. Configuration
/// errors fail the whole run; errors inside a chain are collected.
pub fn run_chains(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let model = model_from_name(&config.model)?;
    let settings = config.chain_settings();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| AtlasError::Config(e.to_string()))?;
    let guarded = |f: &dyn Fn() -> Result<ChainRecord>| {
        catch_unwind(AssertUnwindSafe(f)).map_err(panic_message).and_then(|r| r.map_err(|e| e.to_string()))
    };
    let results: Vec<std::result::Result<ChainRecord, String>> = if config.pool_qg
        && config.sampler == SamplerKind::Atlas
    {
        let warm: Vec<_> = pool.install(|| {
            (0..config.chains)
                .into_par_iter()
                .map(|chain| {
                    catch_unwind(AssertUnwindSafe(|| warmup_chain(model.as_ref(), &settings, chain)))
                        .map_err(panic_message)
                        .and_then(|r| r.map_err(|e| e.to_string()))
                })
                .collect()
        });
        let lengths: Vec<usize> = warm.iter().flatten().flat_map(|w| w.uturn_lengths.iter().copied()).collect();
        let mut notes = vec![];
        let qg = qg_or_default(&lengths, &mut notes);
        pool.install(|| {
            warm.into_par_iter()
                .map(|w| {
                    let w = w?;
                    guarded(&|| {
                        let mut w = w.clone();
                        w.warnings.extend(notes.iter().cloned());
                        Ok(sample_chain(model.as_ref(), &settings, w, Some(qg)))
                    })
                })
                .collect()
        })
    } else {
        pool.install(|| {
            (0..config.chains)
                .into_par_iter()
                .map(|chain| guarded(&|| run_chain(model.as_ref(), &settings, chain)))
                .collect()
        })
    };
    let mut records = vec![];
    let mut failures = vec![];
    for (chain, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(msg) => failures.push((chain, msg)),
        }
    }
    Ok(RunResult { config: config.clone(), dim: model.dim(), records, failures })
}

/// Writes chain files and the manifest into `dir`, creating it if needed.
pub fn write_run(dir: &Path, run: &RunResult) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = run.records.iter().map(|r| write_chain(dir, r)).collect::<Result<Vec<_>>>()?;
    entries.extend(run.failures.iter().map(|(c, m)| ChainEntry::failed(*c, run.config.seed, m.clone())));
    entries.sort_by_key(|e| e.chain);
    let manifest = run.manifest(entries);
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn run_to_dir(config: &RunConfig, dir: &Path) -> Result<(RunResult, Manifest)> {
    let run = run_chains(config)?;
    let manifest = write_run(dir, &run)?;
    Ok((run, manifest))
}
