//! `rtmix`: fit, compare, simulate and check hierarchical reading-time models.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 input data error
//! (including fold plans the data cannot support), 4 numerical failure in
//! the sampler or likelihood, 5 failure writing outputs.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rtmix::model::ModelKind;

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "rtmix", version, about = "Hierarchical lognormal and mixture models of reading times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write draws, diagnostics and a posterior summary.
    Fit(RunArgs),
    /// K-fold cross-validated elpd of both models and their difference.
    Compare(RunArgs),
    /// Write a simulated dataset.
    Simulate(RunArgs),
    /// Simulate, refit and check interval coverage over several seeds.
    Recover(RunArgs),
    /// Posterior predictive check of per-condition statistics.
    Ppc(RunArgs),
}

impl Command {
    fn parts(self) -> (&'static str, RunArgs) {
        match self {
            Command::Fit(a) => ("fit", a),
            Command::Compare(a) => ("compare", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Recover(a) => ("recover", a),
            Command::Ppc(a) => ("ppc", a),
        }
    }
}

/// Flags override values read from `--config`, which override defaults.
#[derive(Args)]
struct RunArgs {
    /// TOML run configuration (e.g. the config.toml of an earlier run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reading-time CSV with columns participant,item,condition,rt.
    #[arg(long)]
    data: Option<PathBuf>,
    /// linear or mixture.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Number of cross-validation folds (default 10).
    #[arg(long)]
    k: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Warmup iterations per chain.
    #[arg(long)]
    warmup: Option<usize>,
    /// Retained draws per chain.
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulated participants.
    #[arg(long)]
    participants: Option<usize>,
    /// Simulated items.
    #[arg(long)]
    items: Option<usize>,
    /// Simulated datasets for `recover`.
    #[arg(long)]
    replicates: Option<usize>,
    /// Replicate datasets for `ppc`.
    #[arg(long)]
    ppc_draws: Option<usize>,
}

impl RunArgs {
    fn into_config(self, command: &str) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        c.command = command.to_string();
        if self.data.is_some() {
            c.data = self.data;
        }
        c.model = self.model.unwrap_or(c.model);
        c.k = self.k.unwrap_or(c.k);
        c.seed = self.seed.unwrap_or(c.seed);
        c.out = self.out.unwrap_or(c.out);
        c.sampler.chains = self.chains.unwrap_or(c.sampler.chains);
        c.sampler.warmup = self.warmup.unwrap_or(c.sampler.warmup);
        c.sampler.samples = self.samples.unwrap_or(c.sampler.samples);
        c.design.participants = self.participants.unwrap_or(c.design.participants);
        c.design.items = self.items.unwrap_or(c.design.items);
        c.replicates = self.replicates.unwrap_or(c.replicates);
        c.ppc_draws = self.ppc_draws.unwrap_or(c.ppc_draws);
        Ok(c)
    }
}

fn main() -> ExitCode {
    let (command, args) = Cli::parse().command.parts();
    let result = args.into_config(command).and_then(|config| commands::run(&config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
