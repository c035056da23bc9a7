//! Run configuration, file formats, parallel chain execution and the
//! experiment recipes behind the command-line tool.

mod config;
mod io;
mod recipes;
mod runner;

pub use config::RunConfig;
pub use io::{
    draws_file_name, load_run, outcomes_file_name, read_draws, read_manifest, read_outcomes, version_string,
    write_draws, write_manifest, write_outcomes, write_summary, ChainEntry, ChainStatus, LoadedRun, Manifest,
    MANIFEST, SUMMARY,
};
pub use recipes::{
    baseline_cost, complex_accuracy, run_recipe, stepsize_robustness, CriterionResult, Recipe, RecipeOptions,
    RecipeReport, MCSE_K,
};
pub use runner::{run_chains, run_to_dir, write_run, RunResult, RunStatus};
