//! `uav-ids`: train an autoencoder on benign flight telemetry and flag
//! windows with anomalous reconstruction loss.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uav_ids_cli::commands;
use uav_ids_cli::config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "uav-ids",
    about = "Window-based anomaly detection for UAV flight telemetry",
    version
)]
struct Cli {
    /// Path to the pipeline TOML config.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,

    /// Override every seed in the config (data splits, init, shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse logs, select features, pool windows, and fit the scaler.
    Prepare,
    /// Train the autoencoder on the benign training split.
    Train,
    /// Calibrate a threshold and write per-window verdicts for a session.
    Detect {
        /// Session id from the config's `[logs]` table.
        session: String,
        /// Start scoring at this wall-clock time (HH:MM:SS, before any
        /// attack). Defaults to a seeded pre-attack window.
        #[arg(long)]
        test_start: Option<String>,
    },
    /// Score one session's verdicts against its ground-truth labels.
    Eval {
        /// Session id from the config's `[logs]` table.
        session: String,
    },
    /// Render plot-ready CSVs and SVG figures for detected sessions.
    Report,
}

fn run(cli: &Cli) -> uav_ids_core::Result<String> {
    let cfg = PipelineConfig::load(&cli.config)?.with_overrides(cli.seed, cli.out.clone());
    match &cli.command {
        Command::Prepare => commands::cmd_prepare(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Detect {
            session,
            test_start,
        } => commands::cmd_detect(&cfg, session, test_start.as_deref()),
        Command::Eval { session } => commands::cmd_eval(&cfg, session),
        Command::Report => commands::cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            print!("{}", summary);
            if !summary.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
