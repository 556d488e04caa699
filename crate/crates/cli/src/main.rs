use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{ensure, Result};
use clap::{Parser, Subcommand, ValueEnum};
use sfac_core::policy::RegularizationConfig;
use sfac_core::DivergenceFamily;

mod commands;
mod config;
mod output;

use commands::{DivergenceMode, GaussFitArgs, GaussVariant};
use output::{RunManifest, RunOutput};

/// Symmetric f-divergence regularization: divergence diagnostics, closed-form
/// regularized policies, Gaussian fits and tabular offline training.
#[derive(Debug, Parser)]
#[command(name = "sfac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn family(s: &str) -> Result<DivergenceFamily, String> {
    s.parse().map_err(|e: sfac_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Taylor,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the series derivatives and coefficients for orders 2..=n-max as CSV.
    Coeffs {
        /// A symmetric family: jeffreys, jensen_shannon or gan.
        #[arg(long, value_parser = family)]
        family: DivergenceFamily,
        /// Highest order printed (>= 2).
        #[arg(long)]
        n_max: u32,
    },
    /// Evaluate a divergence between two distributions stored as CSV numbers.
    Divergence {
        /// forward_kl, reverse_kl, jeffreys, jensen_shannon, gan or chiN.
        #[arg(long, value_parser = family)]
        family: DivergenceFamily,
        /// File holding p.
        #[arg(long)]
        p: PathBuf,
        /// File holding q.
        #[arg(long)]
        q: PathBuf,
        /// Exact value, or the per-order χⁿ expansion.
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        /// Truncation order for taylor mode.
        #[arg(long, required_if_eq("mode", "taylor"))]
        order: Option<u32>,
    },
    /// Print the truncation bound of the symmetric series.
    Bound {
        /// A symmetric family: jeffreys, jensen_shannon or gan.
        #[arg(long, value_parser = family)]
        family: DivergenceFamily,
        /// Truncation order N.
        #[arg(long)]
        order: u32,
        /// Ratio deviation radius in [0, 1).
        #[arg(long)]
        eps: f64,
        /// Number of samples the bound sums over.
        #[arg(long, default_value_t = 1)]
        dataset_size: u64,
    },
    /// Solve the regularized policy for every state in a `state,mu,q` CSV.
    SolvePolicy {
        /// Input rows `state,mu,q`, one per action.
        #[arg(long)]
        input: PathBuf,
        /// Regularization temperature (> 0).
        #[arg(long)]
        tau: f64,
        /// 2 for the χ² regularizer, 3 to add the χ³ term.
        #[arg(long, default_value_t = 2)]
        order: u32,
        /// Family whose coefficients weight the χ² and χ³ terms at order 3.
        #[arg(long, value_parser = family, default_value = "forward_kl")]
        family: DivergenceFamily,
        /// Directory receiving policy.csv and the manifest.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Fit a Gaussian to the mixture target.
    Gaussfit {
        /// Divergence minimized by the fit.
        #[arg(long, value_parser = family, default_value = "jensen_shannon")]
        family: DivergenceFamily,
        /// quadrature: deterministic best fit; exact / expanded: SGD on the loss.
        #[arg(long, value_enum, default_value = "expanded")]
        variant: GaussVariant,
        /// Series order of the expanded loss (overrides the config).
        #[arg(long)]
        n_loss: Option<u32>,
        /// Seed of the SGD draws; recorded but unused for quadrature.
        #[arg(long)]
        seed: u64,
        /// TOML with schema_version, optional [target] and [sgd] sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write density.csv with this many points.
        #[arg(long, default_value_t = 0)]
        grid_points: usize,
        /// Directory receiving fit_report.csv and the manifest.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Train the tabular actors on a generated offline dataset.
    Train {
        /// TOML with schema_version and optional environment, dataset, critic,
        /// loss, optimizer and evaluation sections.
        #[arg(long)]
        config: PathBuf,
        /// Seed of data collection, initialization, minibatches and evaluation.
        #[arg(long)]
        seed: u64,
        /// Directory receiving the CSV outputs and the manifest.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Evaluate a `state,action,prob` policy on the configured gridworld.
    Eval {
        /// Training config; its environment and evaluation sections are used.
        #[arg(long)]
        config: PathBuf,
        /// Policy CSV, e.g. policy_final.csv from a training run.
        #[arg(long)]
        policy: PathBuf,
        /// Seed of the evaluation rollouts.
        #[arg(long)]
        seed: u64,
        /// Directory receiving evaluation.csv and the manifest.
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn finish(name: &str, config: Option<&Path>, seed: Option<u64>, dir: &Path, start: Instant, out: RunOutput) -> Result<()> {
    let manifest = RunManifest::new(name, config, seed, dir, start.elapsed());
    output::commit(dir, &out, &manifest)?;
    print!("{}", out.stdout);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    match cli.command {
        Command::Coeffs { family, n_max } => print!("{}", commands::coeffs(family, n_max)?),
        Command::Divergence { family, p, q, mode, order } => {
            let mode = match mode {
                ModeArg::Exact => DivergenceMode::Exact,
                ModeArg::Taylor => DivergenceMode::Taylor(order.expect("required by clap")),
            };
            print!("{}", commands::divergence(family, &p, &q, mode)?);
        }
        Command::Bound { family, order, eps, dataset_size } => {
            print!("{}", commands::bound(family, order, eps, dataset_size)?)
        }
        Command::SolvePolicy { input, tau, order, family, output_dir } => {
            let cfg = RegularizationConfig::new(tau, order, family)?;
            let out = commands::solve_policy(&input, &cfg)?;
            finish("solve-policy", Some(&input), None, &output_dir, start, out)?;
        }
        Command::Gaussfit { family, variant, n_loss, seed, config, grid_points, output_dir } => {
            let args = GaussFitArgs { family, variant, n_loss, seed, config: config.as_deref(), grid_points };
            let out = commands::gaussfit(&args)?;
            finish("gaussfit", config.as_deref(), Some(seed), &output_dir, start, out)?;
        }
        Command::Train { config, seed, output_dir } => {
            let cfg = config::load(&config)?;
            let out = commands::train_run(&cfg, seed)?;
            finish("train", Some(&config), Some(seed), &output_dir, start, out)?;
        }
        Command::Eval { config, policy, seed, output_dir } => {
            let cfg = config::load(&config)?;
            ensure!(policy.is_file(), "policy file {} does not exist", policy.display());
            let out = commands::eval(&cfg, &policy, seed)?;
            finish("eval", Some(&config), Some(seed), &output_dir, start, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}");
            eprintln!("error: {}", message.split_whitespace().collect::<Vec<_>>().join(" "));
            ExitCode::FAILURE
        }
    }
}
