//! `tmvnlab`: experiments on orthant-truncated Gaussians and shrinkage-prior
//! monotone regression. Every command writes plot-ready tables plus a
//! `manifest.json` from which the run can be repeated exactly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cmd;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use output::{Format, Global};

#[derive(Parser, Debug)]
#[command(name = "tmvnlab", version, about = "Mass-shifting experiments for truncated multivariate normals")]
struct Cli {
    /// Base seed; every sub-experiment derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "tmvnlab-out")]
    out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// JSON file with the command's parameters (a previous manifest works too);
    /// replaces the command-specific flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Marginal densities and near-origin masses along the three (N, K) ladders.
    Marginal(cmd::marginal::MarginalArgs),
    /// Bound chain report, Lemma-type bracket sweep and the region-Q mask.
    Bounds(cmd::bounds::BoundsArgs),
    /// Monotone regression fits under the four prior variants.
    Fit(cmd::fit::FitArgs),
    /// Posterior scale matrices and their banded approximations.
    PosteriorBand(cmd::band::BandArgs),
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("TMVNLAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| format!("TMVNLAB_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            return Err("TMVNLAB_THREADS must be a positive integer, got 0".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = (|| {
        let stored = cli.config.as_deref().map(output::load_config).transpose()?;
        let global = Global::resolve(cli.seed, cli.format, cli.out.clone(), stored.as_ref());
        let stored_config = stored.map(|s| s.config);
        match cli.command {
            Command::Marginal(a) => cmd::marginal::run(output::pick(a, stored_config)?, &global),
            Command::Bounds(a) => cmd::bounds::run(output::pick(a, stored_config)?, &global),
            Command::Fit(a) => cmd::fit::run(output::pick(a, stored_config)?, &global),
            Command::PosteriorBand(a) => cmd::band::run(output::pick(a, stored_config)?, &global),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(output::exit_code(&e))
        }
    }
}
