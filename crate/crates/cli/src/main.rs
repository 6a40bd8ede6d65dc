mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{parse_grid, ExperimentConfig};

#[derive(Parser)]
#[command(name = "scl", version, about = "Stochastic composite likelihood estimation for Markov random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from the configured model and θ₀.
    Sample(Flags),
    /// Fit the configured composite likelihood.
    Fit(Flags),
    /// Exact asymptotic variance and efficiency table (enumerable models).
    Asymvar(Flags),
    /// Computation/accuracy grid with Pareto flags.
    Tradeoff(Flags),
    /// Chunking perplexity grid on a CoNLL-2000 style corpus.
    Chunk(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Choose β by alternating with the estimator.
    #[arg(long)]
    auto_beta: bool,
    /// Policy family: independence, multinomial or product_of_multinomials.
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated values.
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long)]
    beta_grid: Option<String>,
    #[arg(long)]
    sigma2_grid: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
}

impl Flags {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.chunk.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.auto_beta {
            cfg.auto_beta = true;
            cfg.chunk.auto_beta = true;
        }
        if let Some(p) = &self.policy {
            cfg.policy.family = serde_json::from_value(serde_json::Value::String(p.clone()))
                .map_err(|_| anyhow::anyhow!("--policy: unknown family `{p}`"))?;
        }
        if let Some(g) = &self.lambda_grid {
            cfg.lambda_grid = parse_grid(g, "--lambda-grid")?;
            cfg.chunk.lambda_grid = cfg.lambda_grid.clone();
        }
        if let Some(g) = &self.beta_grid {
            cfg.beta_grid = parse_grid(g, "--beta-grid")?;
            cfg.chunk.beta_grid = cfg.beta_grid.clone();
        }
        if let Some(g) = &self.sigma2_grid {
            cfg.sigma2_grid = parse_grid(g, "--sigma2-grid")?;
            cfg.chunk.sigma2_grid = cfg.sigma2_grid.clone();
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
            cfg.chunk.replicates = r;
        }
        cfg.check_grids()?;
        cfg.fit.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(f) => commands::cmd_sample(&f.resolve()?),
        Command::Fit(f) => commands::cmd_fit(&f.resolve()?),
        Command::Asymvar(f) => commands::cmd_asymvar(&f.resolve()?),
        Command::Tradeoff(f) => commands::cmd_tradeoff(&f.resolve()?),
        Command::Chunk(f) => commands::cmd_chunk(&f.resolve()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
