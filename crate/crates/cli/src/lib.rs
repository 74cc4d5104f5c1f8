//! Batch front end for the CFA-CAR model. Each subcommand reads its inputs,
//! writes CSV/JSON results into an output directory and leaves a
//! `manifest.json` there describing the run.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod tables;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::JOBS_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "cfacar",
    version,
    about = "Detect perturbed pathways with the CFA-CAR factor model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the pathway network from pathway and function gene sets.
    BuildNetwork(BuildNetworkArgs),
    /// Run the sampler and summarize the posterior.
    Fit(FitArgs),
    /// Re-threshold a fit's posterior at another BFDR level.
    Select(SelectArgs),
    /// Convergence, model-fit and leave-one-out diagnostics.
    Diagnose(DiagnoseArgs),
    /// Simulation benchmark of CFA-CAR against EFA.
    Bench(BenchArgs),
    /// Write a synthetic data set and catalog in the input formats.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct BuildNetworkArgs {
    /// Pathway gene sets (GMT).
    #[arg(long)]
    pub pathways: PathBuf,
    /// Biological-function gene sets (GMT).
    #[arg(long)]
    pub functions: PathBuf,
    #[arg(long, default_value_t = cfacar::network::DEFAULT_JACCARD_THRESHOLD)]
    pub jaccard_min: f64,
    /// Trim of the admissible γ interval recorded in the sidecar.
    #[arg(long, default_value_t = cfacar::network::DEFAULT_GAMMA_DELTA)]
    pub delta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Expression matrix (TSV, genes × samples).
    #[arg(long)]
    pub expr: PathBuf,
    /// Sample metadata (TSV).
    #[arg(long)]
    pub meta: PathBuf,
    /// Network written by `build-network` (path with or without extension).
    #[arg(long)]
    pub network: PathBuf,
    /// Pathway gene sets (GMT) defining the loading mask.
    #[arg(long)]
    pub pathways: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub bfdr: Option<f64>,
    /// Fit the exploratory baseline (no network, γ = 0).
    #[arg(long)]
    pub efa: bool,
    #[arg(long, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Output directory of a `fit` run.
    #[arg(long)]
    pub summary: PathBuf,
    #[arg(long, default_value_t = config::DEFAULT_BFDR)]
    pub bfdr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Chain trace directories, or fit output directories holding them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Refit with each control held out in turn (needs a fit directory).
    #[arg(long)]
    pub loo: bool,
    #[arg(long)]
    pub bfdr: Option<f64>,
    /// Sampler overrides for the leave-one-out refits.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark scenario (JSON).
    #[arg(long, alias = "config")]
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = JOBS_ENV)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildNetwork(a) => commands::network::run(&a),
        Command::Fit(a) => commands::fit::run(&a).map(|_| ()),
        Command::Select(a) => commands::select::run(&a),
        Command::Diagnose(a) => commands::diagnose::run(&a),
        Command::Bench(a) => commands::bench::run(&a),
        Command::Simulate(a) => commands::simulate::run(&a),
    }
}
