use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atlas_core::diagnostics::{summarize, Summary};
use atlas_core::harness::{
    load_run, run_recipe, run_to_dir, write_summary, Recipe, RecipeOptions, RunConfig, RunStatus,
};
use atlas_core::samplers::SamplerKind;
use atlas_core::targets::{list_models, model_from_name};
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_USAGE: u8 = 1;
const EXIT_CRITERION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "atlas", version, about = "Adaptive-step HMC sampler and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run chains and write draw files plus a manifest.
    Sample(SampleArgs),
    /// Report accuracy, branch rates and cost of a run directory.
    Summarize(SummarizeArgs),
    /// Run a desk-scale experiment and check its thresholds.
    Reproduce(ReproduceArgs),
    /// List model names accepted by --model.
    ListModels,
}

#[derive(Args)]
struct SampleArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    /// atlas, atlas-simple, nout-fixed or hmc-fixed.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    /// Dual-averaging iterations.
    #[arg(long)]
    warmup_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use this baseline step instead of tuning one.
    #[arg(long)]
    eps0: Option<f64>,
    /// Multiply the baseline step after tuning.
    #[arg(long)]
    eps0_scale: Option<f64>,
    #[arg(long)]
    target_accept: Option<f64>,
    /// Parent directory of run directories.
    #[arg(long, env = "ATLAS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Exact run directory; defaults to <output-dir>/<model>_<sampler>_s<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    sigma_star: Option<f64>,
    #[arg(long)]
    n_h: Option<usize>,
    #[arg(long)]
    hmc_steps: Option<usize>,
    #[arg(long)]
    cache_reverse: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Both,
}

#[derive(Args)]
struct SummarizeArgs {
    run_dir: PathBuf,
    /// Run directory whose mean chain cost normalises the costs.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct ReproduceArgs {
    /// complex-accuracy, baseline-cost or stepsize-robustness.
    recipe: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Multiply every draw count (thresholds assume 1).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Keep the runs under this directory.
    #[arg(long, env = "ATLAS_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => sample(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Reproduce(a) => reproduce(a),
        Command::ListModels => {
            for (name, about) in list_models() {
                println!("{name:<40} {about}");
            }
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn build_config(a: &SampleArgs) -> atlas_core::Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $flag:expr),* $(,)?) => { $(if let Some(v) = $flag.clone() { c.$field = v; })* };
    }
    set!(model <- a.model, chains <- a.chains, draws <- a.draws, warmup_iters <- a.warmup_iters,
         seed <- a.seed, eps0_scale <- a.eps0_scale, output_dir <- a.output_dir, n_min <- a.n_min,
         n_max <- a.n_max, sigma_star <- a.sigma_star, n_h <- a.n_h, hmc_steps <- a.hmc_steps);
    if let Some(s) = &a.sampler {
        c.sampler = s.parse::<SamplerKind>()?;
    }
    if a.eps0.is_some() {
        c.eps0_override = a.eps0;
    }
    if a.target_accept.is_some() {
        c.target_accept = a.target_accept;
    }
    if a.workers.is_some() {
        c.workers = a.workers;
    }
    c.cache_reverse |= a.cache_reverse;
    c.validate()?;
    model_from_name(&c.model)?;
    Ok(c)
}

fn sample(a: SampleArgs) -> atlas_core::Result<u8> {
    let config = build_config(&a)?;
    let dir = a.out.clone().unwrap_or_else(|| config.run_dir());
    let (run, manifest) = run_to_dir(&config, &dir)?;
    for e in &manifest.chains {
        match &e.error {
            Some(msg) => eprintln!("chain {}: failed: {msg}", e.chain),
            None => {
                for w in &e.warnings {
                    eprintln!("chain {}: warning: {w}", e.chain);
                }
            }
        }
    }
    println!(
        "{} chains of {} on {} written to {}",
        run.records.len(),
        config.sampler,
        config.model,
        dir.display()
    );
    Ok(match run.status() {
        RunStatus::Complete => 0,
        RunStatus::Partial => EXIT_PARTIAL,
        RunStatus::Failed => EXIT_USAGE,
    })
}

fn summarize_dir(dir: &Path, baseline: Option<&Path>) -> atlas_core::Result<Summary> {
    let run = load_run(dir)?;
    let reference = model_from_name(&run.manifest.config.model)?.moments();
    let base = baseline.map(load_run).transpose()?;
    summarize(&run.records, reference.as_ref(), base.as_ref().map(|b| b.records.as_slice()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn print_table(s: &Summary) {
    println!("model {}  sampler {}", s.model, s.sampler);
    println!(
        "{:>6} {:>8} {:>10} {:>10} {:>8} {:>12} {:>10} {:>9}",
        "chain", "draws", "zrmse", "zrmse_sq", "accept", "grad_evals", "cost_ratio", "eps0"
    );
    for r in s.per_chain.iter().chain([&s.pooled]) {
        println!(
            "{:>6} {:>8} {:>10} {:>10} {:>8.3} {:>12} {:>10} {:>9}",
            r.chain.map_or_else(|| "pooled".into(), |c| c.to_string()),
            r.draws,
            fmt_opt(r.zrmse_theta),
            fmt_opt(r.zrmse_theta2),
            r.accept_rate,
            r.grad_evals_total,
            fmt_opt(r.cost_ratio),
            fmt_opt(r.eps0),
        );
    }
    println!("branches (pooled):");
    for (b, n) in &s.pooled.branch_counts {
        println!("  {b:<22} {n:>9} {:>8.4}", s.pooled.branch_rates[b]);
    }
    let worst = |v: &[f64]| v.iter().copied().fold(f64::NAN, f64::max);
    println!("max split-rhat {:.4}  min ess {:.1}", worst(&s.rhat_theta), s.ess_theta.iter().copied().fold(f64::INFINITY, f64::min));
}

fn summarize_cmd(a: SummarizeArgs) -> atlas_core::Result<u8> {
    let s = summarize_dir(&a.run_dir, a.baseline.as_deref())?;
    let path = write_summary(&a.run_dir, &s)?;
    if matches!(a.format, Format::Table | Format::Both) {
        print_table(&s);
        println!("summary written to {}", path.display());
    }
    if matches!(a.format, Format::Json | Format::Both) {
        println!("{}", serde_json::to_string_pretty(&s)?);
    }
    Ok(0)
}

fn reproduce(a: ReproduceArgs) -> atlas_core::Result<u8> {
    let recipe: Recipe = a.recipe.parse()?;
    if !(a.scale > 0.0) {
        return Err(atlas_core::AtlasError::InvalidParameter("scale must be positive".into()));
    }
    let defaults = RecipeOptions::default();
    let opts = RecipeOptions {
        seed: a.seed.unwrap_or(defaults.seed),
        workers: a.workers,
        scale: a.scale,
        output_dir: a.output_dir,
    };
    let report = run_recipe(recipe, &opts)?;
    for r in &report.results {
        println!("{r}");
    }
    Ok(if report.passed() { 0 } else { EXIT_CRITERION })
}
