//! Batch front end: every subcommand reads a TOML config, validates it in
//! full, then writes CSV/JSON artifacts and a manifest into `--out-dir`.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "prefid", version, about = "Preference set identification with the extensive margin")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Clone, Copy)]
pub struct MarginFlags {
    /// Only the moment system with the extensive margin.
    #[arg(long = "with-B", conflicts_with = "without_b")]
    pub with_b: bool,
    /// Only the moment system without it.
    #[arg(long = "without-B")]
    pub without_b: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the heterogeneous-agent economy and export a simulated panel.
    Simulate(Common),
    /// Profile likelihood-ratio sets from the CU-GMM criterion.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        margin: MarginFlags,
    },
    /// Quasi-Bayesian MCMC sets.
    Infer {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        margin: MarginFlags,
    },
    /// Extract the quarterly constrained share from mixed-frequency data.
    FilterB(Common),
    /// Toy-model policy, distortion coefficients and analytic bounds.
    Bounds(Common),
    /// Euler wedges and the equity-premium prediction over a parameter set.
    Premium(Common),
    /// Summarize the artifacts of earlier runs in a directory.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Cmd::Simulate(c) => commands::simulate(&c),
        Cmd::Estimate { common, margin } => commands::estimate(&common, margin),
        Cmd::Infer { common, margin } => commands::infer(&common, margin),
        Cmd::FilterB(c) => commands::filter_b(&c),
        Cmd::Bounds(c) => commands::bounds(&c),
        Cmd::Premium(c) => commands::premium(&c),
        Cmd::Report { out_dir } => commands::report(&out_dir),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
