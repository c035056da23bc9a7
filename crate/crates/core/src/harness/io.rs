//! On-disk layout of a run directory:
//!
//! ```text
//! manifest.json           config, library version, per-chain status
//! chain-000.csv           draws, header theta_0..theta_{D-1}
//! chain-000.outcomes.csv  one BranchOutcome per draw
//! summary.json            written by `summarize`
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::diagnostics::{ChainRecord, Summary};
use crate::error::{AtlasError, Result};
use crate::samplers::{BranchOutcome, GlobalTrajectoryDistribution};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

pub fn version_string() -> String {
    format!("atlas-core {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub chain: usize,
    pub seed: u64,
    /// RNG stream of the chain within `seed`.
    pub stream: u64,
    pub status: ChainStatus,
    pub error: Option<String>,
    pub draws_file: Option<String>,
    pub outcomes_file: Option<String>,
    pub eps0: Option<f64>,
    pub qg: Option<GlobalTrajectoryDistribution>,
    pub warmup_cost: u64,
    pub sampling_cost: u64,
    pub warnings: Vec<String>,
}

impl ChainEntry {
    pub fn failed(chain: usize, seed: u64, error: String) -> Self {
        Self {
            chain,
            seed,
            stream: chain as u64,
            status: ChainStatus::Failed,
            error: Some(error),
            draws_file: None,
            outcomes_file: None,
            eps0: None,
            qg: None,
            warmup_cost: 0,
            sampling_cost: 0,
            warnings: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub dim: usize,
    pub chains: Vec<ChainEntry>,
}

impl Manifest {
    pub fn failed_chains(&self) -> usize {
        self.chains.iter().filter(|c| c.status == ChainStatus::Failed).count()
    }
}

pub fn draws_file_name(chain: usize) -> String {
    format!("chain-{chain:03}.csv")
}

pub fn outcomes_file_name(chain: usize) -> String {
    format!("chain-{chain:03}.outcomes.csv")
}

fn corrupt(path: &Path, reason: impl Into<String>) -> AtlasError {
    AtlasError::CorruptRun { path: path.to_path_buf(), reason: reason.into() }
}

pub fn write_draws(path: &Path, draws: &[Vec<f64>], dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record((0..dim).map(|d| format!("theta_{d}")))?;
    for row in draws {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_draws(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let dim = r.headers()?.len();
    let mut draws = vec![];
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != dim {
            return Err(corrupt(path, format!("row {} has {} fields, expected {dim}", draws.len() + 1, rec.len())));
        }
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| corrupt(path, format!("bad number `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        draws.push(row);
    }
    Ok(draws)
}

pub fn write_outcomes(path: &Path, outcomes: &[BranchOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for o in outcomes {
        w.serialize(o)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_outcomes(path: &Path) -> Result<Vec<BranchOutcome>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    Ok(r.deserialize().collect::<std::result::Result<Vec<BranchOutcome>, _>>()?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    write_json(&dir.join(MANIFEST), manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let f = File::open(&path).map_err(|e| corrupt(&path, e.to_string()))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| corrupt(&path, e.to_string()))
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<PathBuf> {
    let path = dir.join(SUMMARY);
    write_json(&path, summary)?;
    Ok(path)
}

/// Writes both files of a chain and returns its manifest entry.
pub fn write_chain(dir: &Path, record: &ChainRecord) -> Result<ChainEntry> {
    let draws_file = draws_file_name(record.chain);
    let outcomes_file = outcomes_file_name(record.chain);
    write_draws(&dir.join(&draws_file), &record.draws, record.dim())?;
    write_outcomes(&dir.join(&outcomes_file), &record.outcomes)?;
    Ok(ChainEntry {
        chain: record.chain,
        seed: record.seed,
        stream: record.chain as u64,
        status: ChainStatus::Ok,
        error: None,
        draws_file: Some(draws_file),
        outcomes_file: Some(outcomes_file),
        eps0: Some(record.eps0),
        qg: record.qg,
        warmup_cost: record.warmup_cost,
        sampling_cost: record.sampling_cost,
        warnings: record.warnings.clone(),
    })
}

/// A run directory read back into memory. Failed chains are skipped.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<ChainRecord>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest = read_manifest(dir)?;
    let mut records = vec![];
    for e in manifest.chains.iter().filter(|e| e.status == ChainStatus::Ok) {
        let missing = |what: &str| corrupt(&dir.join(MANIFEST), format!("chain {} has no {what}", e.chain));
        let draws_path = dir.join(e.draws_file.as_deref().ok_or_else(|| missing("draws file"))?);
        let draws = read_draws(&draws_path)?;
        let outcomes_path = dir.join(e.outcomes_file.as_deref().ok_or_else(|| missing("outcomes file"))?);
        let outcomes = read_outcomes(&outcomes_path)?;
        if draws.len() != outcomes.len() {
            return Err(corrupt(
                &outcomes_path,
                format!("{} outcomes for {} draws", outcomes.len(), draws.len()),
            ));
        }
        if draws.first().is_some_and(|r| r.len() != manifest.dim) {
            return Err(corrupt(&draws_path, format!("expected {} columns", manifest.dim)));
        }
        records.push(ChainRecord {
            model: manifest.config.model.clone(),
            sampler: manifest.config.sampler,
            seed: e.seed,
            chain: e.chain,
            eps0: e.eps0.ok_or_else(|| missing("eps0"))?,
            qg: e.qg,
            draws,
            outcomes,
            warmup_cost: e.warmup_cost,
            sampling_cost: e.sampling_cost,
            warnings: e.warnings.clone(),
        });
    }
    Ok(LoadedRun { dir: dir.to_path_buf(), manifest, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::Branch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect())
            .chain([vec![1e-300, -0.0, f64::MAX]])
            .collect();
        let p = dir.path().join("d.csv");
        write_draws(&p, &draws, 3).unwrap();
        assert_eq!(read_draws(&p).unwrap(), draws);
    }

    #[test]
    fn outcomes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = BranchOutcome::new(Branch::DrAccept, 0.3);
        a.n_ut = Some(12);
        a.n1 = Some(7);
        a.n2 = Some(20);
        a.f_off = Some(0.41);
        a.alpha = 0.25;
        a.log_ratio = 0.25f64.ln();
        a.grad_cost = 90;
        let b = BranchOutcome::new(Branch::NoutSubUturnReject, 0.1);
        let p = dir.path().join("o.csv");
        write_outcomes(&p, &[a, b]).unwrap();
        assert_eq!(read_outcomes(&p).unwrap(), vec![a, b]);
    }

    #[test]
    fn ragged_rows_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "theta_0,theta_1\n1,2\n3,x\n").unwrap();
        assert!(matches!(read_draws(&p), Err(AtlasError::CorruptRun { .. })));
        assert!(read_manifest(dir.path()).is_err());
    }
}
