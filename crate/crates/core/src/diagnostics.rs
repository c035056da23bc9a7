//! Accuracy, cost and convergence summaries of chain records.
//!
//! ESS and rank-normalised split-R̂ are auxiliary; the accuracy metrics are
//! the normalised moment errors zERR and zRMSE.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{AtlasError, Result};
use crate::samplers::{Branch, BranchOutcome, GlobalTrajectoryDistribution, SamplerKind};
use crate::targets::AnalyticMoments;

/// Everything one chain produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub model: String,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub chain: usize,
    pub eps0: f64,
    pub qg: Option<GlobalTrajectoryDistribution>,
    pub draws: Vec<Vec<f64>>,
    pub outcomes: Vec<BranchOutcome>,
    pub warmup_cost: u64,
    pub sampling_cost: u64,
    pub warnings: Vec<String>,
}

impl ChainRecord {
    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.draws.iter().map(|row| row[d]).collect()
    }

    pub fn branch_counts(&self) -> BTreeMap<Branch, usize> {
        let mut counts = BTreeMap::new();
        for o in &self.outcomes {
            *counts.entry(o.branch).or_insert(0) += 1;
        }
        counts
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` in the denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn check_dims(draws: &[Vec<f64>], reference: &AnalyticMoments) -> Result<usize> {
    let d = reference.dim();
    if let Some(row) = draws.iter().find(|r| r.len() != d) {
        return Err(AtlasError::DimensionMismatch { expected: d, got: row.len() });
    }
    if let Some(i) = reference.sd().iter().chain(&reference.sd_sq()).position(|s| !(*s > 0.0)) {
        return Err(AtlasError::ZeroReferenceSd(i % d.max(1)));
    }
    Ok(d)
}

/// Per-dimension `(mean θ_d - μ_d)/σ_d` and the same for `θ_d²`.
pub fn zerr(draws: &[Vec<f64>], reference: &AnalyticMoments) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = check_dims(draws, reference)?;
    let n = draws.len() as f64;
    let (sd, sd_sq) = (reference.sd(), reference.sd_sq());
    let mut z = vec![0.0; d];
    let mut z2 = vec![0.0; d];
    for j in 0..d {
        let m1 = draws.iter().map(|r| r[j]).sum::<f64>() / n;
        let m2 = draws.iter().map(|r| r[j] * r[j]).sum::<f64>() / n;
        z[j] = (m1 - reference.mean[j]) / sd[j];
        z2[j] = (m2 - reference.mean_sq[j]) / sd_sq[j];
    }
    Ok((z, z2))
}

pub fn zrmse(z: &[f64]) -> f64 {
    (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt()
}

fn split_chains(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect()
}

/// Biased autocovariance at `lag`.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Multi-chain split effective sample size with Geyer's initial monotone
/// sequence estimator.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let parts = split_chains(chains);
    let m = parts.len();
    let n = parts.first().map_or(0, |p| p.len());
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let vars: Vec<f64> = parts.iter().map(|p| variance(p)).collect();
    let w = mean(&vars);
    let b_over_n = if m > 1 { variance(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |t: usize| {
        let acov = parts.iter().zip(&means).map(|(p, mu)| autocov(p, *mu, t)).sum::<f64>() / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let ess = total / tau.max(1.0 / total.log10());
    ess.min(total * total.log10())
}

fn rhat_raw(parts: &[&[f64]]) -> f64 {
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = mean(&parts.iter().map(|p| variance(p)).collect::<Vec<_>>());
    let var_plus = (n - 1.0) / n * w + variance(&means);
    (var_plus / w).sqrt()
}

fn rank_normalize(parts: &[&[f64]]) -> Vec<Vec<f64>> {
    let all: Vec<(usize, usize, f64)> = parts
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.iter().enumerate().map(move |(j, v)| (i, j, *v)))
        .collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| all[a].2.total_cmp(&all[b].2));
    let s = all.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = parts.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && all[order[end + 1]].2 == all[order[k]].2 {
            end += 1;
        }
        // Average rank for ties, ranks starting at 1.
        let rank = (k + end) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &idx in &order[k..=end] {
            out[all[idx].0][all[idx].1] = z;
        }
        k = end + 1;
    }
    out
}

/// Rank-normalised split-R̂: the larger of the bulk and folded (tail)
/// statistics.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split_chains(chains);
    if parts.len() < 2 || parts[0].len() < 2 {
        return f64::NAN;
    }
    let bulk = rank_normalize(&parts);
    let bulk_refs: Vec<&[f64]> = bulk.iter().map(Vec::as_slice).collect();
    let mut pooled: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let median = pooled[pooled.len() / 2];
    let folded: Vec<Vec<f64>> = parts.iter().map(|p| p.iter().map(|v| (v - median).abs()).collect()).collect();
    let folded_refs: Vec<&[f64]> = folded.iter().map(Vec::as_slice).collect();
    let tail = rank_normalize(&folded_refs);
    let tail_refs: Vec<&[f64]> = tail.iter().map(Vec::as_slice).collect();
    rhat_raw(&bulk_refs).max(rhat_raw(&tail_refs))
}

/// Normalised error of one moment with its Monte Carlo tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub zerr: f64,
    /// Monte Carlo standard error of the estimate in reference-sd units.
    pub mcse: f64,
    pub ess: f64,
}

impl MomentCheck {
    pub fn within(&self, k: f64) -> bool {
        self.zerr.abs() <= k * self.mcse
    }
}

/// zERR of `θ_d` and `θ_d²` over all chains together with their MCSE, using
/// the multi-chain ESS.
pub fn moment_checks(
    records: &[ChainRecord],
    reference: &AnalyticMoments,
) -> Result<(Vec<MomentCheck>, Vec<MomentCheck>)> {
    let pooled: Vec<Vec<f64>> = records.iter().flat_map(|r| r.draws.iter().cloned()).collect();
    let (z, z2) = zerr(&pooled, reference)?;
    let (sd, sd_sq) = (reference.sd(), reference.sd_sq());
    let check = |cols: Vec<Vec<f64>>, zerr: f64, sd_ref: f64| {
        let all: Vec<f64> = cols.iter().flatten().copied().collect();
        let ess = ess(&cols);
        let mcse = variance(&all).sqrt() / ess.sqrt() / sd_ref;
        MomentCheck { zerr, mcse, ess }
    };
    let mut c1 = vec![];
    let mut c2 = vec![];
    for d in 0..reference.dim() {
        let cols: Vec<Vec<f64>> = records.iter().map(|r| r.column(d)).collect();
        let sq: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| v * v).collect()).collect();
        c1.push(check(cols, z[d], sd[d]));
        c2.push(check(sq, z2[d], sd_sq[d]));
    }
    Ok((c1, c2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `None` for the pooled report.
    pub chain: Option<usize>,
    pub draws: usize,
    pub zerr_theta: Option<Vec<f64>>,
    pub zerr_theta2: Option<Vec<f64>>,
    pub zrmse_theta: Option<f64>,
    pub zrmse_theta2: Option<f64>,
    pub branch_counts: BTreeMap<String, usize>,
    pub branch_rates: BTreeMap<String, f64>,
    pub accept_rate: f64,
    pub warmup_cost: u64,
    pub grad_evals_total: u64,
    /// Sampling cost over the mean sampling cost of a baseline chain.
    pub cost_ratio: Option<f64>,
    pub eps0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub sampler: SamplerKind,
    pub per_chain: Vec<MetricReport>,
    pub pooled: MetricReport,
    pub ess_theta: Vec<f64>,
    pub rhat_theta: Vec<f64>,
}

fn report(
    chain: Option<usize>,
    records: &[&ChainRecord],
    reference: Option<&AnalyticMoments>,
    baseline_cost: Option<f64>,
) -> Result<MetricReport> {
    let draws: Vec<Vec<f64>> = records.iter().flat_map(|r| r.draws.iter().cloned()).collect();
    let (z, z2) = match reference {
        Some(m) => {
            let (z, z2) = zerr(&draws, m)?;
            (Some(z), Some(z2))
        }
        None => (None, None),
    };
    let mut counts = BTreeMap::new();
    for r in records {
        for (b, c) in r.branch_counts() {
            *counts.entry(b).or_insert(0usize) += c;
        }
    }
    let total: usize = counts.values().sum();
    let accepted: usize = counts.iter().filter(|(b, _)| b.accepted()).map(|(_, c)| c).sum();
    let rate = |c: usize| if total == 0 { 0.0 } else { c as f64 / total as f64 };
    let sampling: u64 = records.iter().map(|r| r.sampling_cost).sum();
    let mean_cost = sampling as f64 / records.len() as f64;
    Ok(MetricReport {
        chain,
        draws: draws.len(),
        zrmse_theta: z.as_deref().map(zrmse),
        zrmse_theta2: z2.as_deref().map(zrmse),
        zerr_theta: z,
        zerr_theta2: z2,
        branch_rates: counts.iter().map(|(b, c)| (b.to_string(), rate(*c))).collect(),
        branch_counts: counts.iter().map(|(b, c)| (b.to_string(), *c)).collect(),
        accept_rate: rate(accepted),
        warmup_cost: records.iter().map(|r| r.warmup_cost).sum(),
        grad_evals_total: sampling,
        cost_ratio: baseline_cost.map(|b| mean_cost / b),
        eps0: (records.len() == 1).then(|| records[0].eps0),
    })
}

/// Mean sampling cost of a chain.
pub fn mean_chain_cost(records: &[ChainRecord]) -> f64 {
    records.iter().map(|r| r.sampling_cost as f64).sum::<f64>() / records.len() as f64
}

/// Per-chain and pooled reports. Costs are normalised by the mean chain cost
/// of `baseline` when given.
pub fn summarize(
    records: &[ChainRecord],
    reference: Option<&AnalyticMoments>,
    baseline: Option<&[ChainRecord]>,
) -> Result<Summary> {
    let first = records
        .first()
        .ok_or_else(|| AtlasError::InvalidParameter("no chain records to summarise".into()))?;
    let d = first.dim();
    for r in records.iter().chain(baseline.unwrap_or(&[])) {
        if r.dim() != d {
            return Err(AtlasError::DimensionMismatch { expected: d, got: r.dim() });
        }
    }
    let baseline_cost = baseline.filter(|b| !b.is_empty()).map(mean_chain_cost);
    let per_chain = records
        .iter()
        .map(|r| report(Some(r.chain), &[r], reference, baseline_cost))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<&ChainRecord> = records.iter().collect();
    let pooled = report(None, &all, reference, baseline_cost)?;
    let columns = |j: usize| records.iter().map(|r| r.column(j)).collect::<Vec<_>>();
    Ok(Summary {
        model: first.model.clone(),
        sampler: first.sampler,
        per_chain,
        pooled,
        ess_theta: (0..d).map(|j| ess(&columns(j))).collect(),
        rhat_theta: (0..d).map(|j| split_rhat(&columns(j))).collect(),
    })
}
