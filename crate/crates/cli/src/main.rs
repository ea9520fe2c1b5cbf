mod commands;
mod config;
mod error;
mod fetch;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::{RunConfig, OUTDIR_ENV};
use crate::error::CliError;

/// Latent total-infection inference from reported case counts.
#[derive(Debug, Parser)]
#[command(name = "mdl-epi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for grid cells and scenarios.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Infectiousness multiplier of isolated people in scenarios.
    #[arg(long, global = true)]
    multiplier: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model to reported infections.
    Calibrate,
    /// Search for the total-infection series of least description length.
    Infer {
        /// Stop after the reporting-rate grid.
        #[arg(long)]
        alpha_only: bool,
        /// Reuse the saved baseline fit instead of recalibrating.
        #[arg(long)]
        resume: bool,
    },
    /// Simulate both fits over the observed and forecast periods.
    Forecast,
    /// Run the isolation scenario suite.
    Scenario,
    /// Write the evaluation report.
    Report,
    /// Download a case-count CSV.
    Fetch {
        #[arg(long)]
        url: Option<String>,
        /// Destination; defaults to the configured cases file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Expected SHA-256 of the download, hex encoded.
        #[arg(long)]
        sha256: Option<String>,
    },
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    let outdir = std::env::var_os(OUTDIR_ENV).map(PathBuf::from);
    cfg.apply_overrides(global.seed, global.multiplier, outdir);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Command::Fetch { url, out, sha256 } = &cli.command {
        let cfg = match &cli.global.config {
            Some(_) => Some(load_config(&cli.global)?),
            None => None,
        };
        let url = url
            .clone()
            .or_else(|| cfg.as_ref().and_then(|c| c.data.url.clone()))
            .ok_or_else(|| CliError::Config("no URL given".into()))?;
        let out = out
            .clone()
            .or_else(|| cfg.as_ref().map(|c| c.data.cases.clone()))
            .ok_or_else(|| CliError::Config("no destination given".into()))?;
        let sha256 = sha256.clone().or_else(|| cfg.as_ref().and_then(|c| c.data.sha256.clone()));
        let digest = fetch::fetch(&url, &out, sha256.as_deref())?;
        println!("{digest}  {}", out.display());
        return Ok(());
    }

    let ctx = Context::load(load_config(&cli.global)?)?;
    match cli.command {
        Command::Calibrate => {
            commands::cmd_calibrate(&ctx)?;
        }
        Command::Infer { alpha_only, resume } => match commands::cmd_infer(&ctx, alpha_only, resume)? {
            commands::InferOutcome::Grid(g) => println!("alpha* = {:.2}", g.alpha_star),
            commands::InferOutcome::Full(r) => {
                println!("alpha* = {:.2}, total cost {:.3} bits", r.alpha_star, r.refined_cost.total)
            }
        },
        Command::Forecast => commands::cmd_forecast(&ctx)?,
        Command::Scenario => commands::cmd_scenario(&ctx)?,
        Command::Report => commands::cmd_report(&ctx)?,
        Command::Fetch { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
