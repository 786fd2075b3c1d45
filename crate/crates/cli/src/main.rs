//! `hopdream` — build dreaming Hopfield couplings, evaluate their spectral
//! theory, and verify the predictions against Monte Carlo simulation.

mod common;
mod coupling_cmd;
mod reproduce;
mod retrieval_cmd;
mod simulate_cmd;
mod theory_cmd;
mod verify;

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "hopdream",
    version,
    about = "Dreaming Hopfield couplings: spectral theory vs simulation"
)]
struct Cli {
    /// Output directory for results and sidecars.
    #[arg(long, global = true, env = "HOPDREAM_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build coupling matrices and dump them to disk.
    #[command(subcommand)]
    Coupling(coupling_cmd::CouplingCmd),
    /// Evaluate limiting spectral laws.
    #[command(subcommand)]
    Theory(theory_cmd::TheoryCmd),
    /// One-step retrieval predictions under the Gaussian approximation.
    #[command(subcommand)]
    Retrieval(retrieval_cmd::RetrievalCmd),
    /// Finite-size Monte Carlo runs.
    #[command(subcommand)]
    Simulate(simulate_cmd::SimulateCmd),
    /// Regenerate the data behind the reference figures.
    Reproduce(reproduce::ReproduceCmd),
    /// Run the built-in verification suite.
    Verify(verify::VerifyCmd),
    /// Re-run a previous command from its metadata sidecar.
    Rerun {
        /// Path to a `*.meta.json` sidecar.
        metadata: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Coupling(cmd) => coupling_cmd::run(cmd, &cli.out_dir),
        Command::Theory(cmd) => theory_cmd::run(cmd, &cli.out_dir),
        Command::Retrieval(cmd) => retrieval_cmd::run(cmd, &cli.out_dir),
        Command::Simulate(cmd) => simulate_cmd::run(cmd, &cli.out_dir),
        Command::Reproduce(cmd) => reproduce::run(cmd, &cli.out_dir),
        Command::Verify(cmd) => verify::run(cmd),
        Command::Rerun { metadata } => rerun(&metadata, &cli.out_dir),
    }
}

/// Dispatch a stored run: the sidecar's `command` field names the runner and
/// `config` carries its fully resolved arguments.
fn rerun(metadata: &std::path::Path, out_dir: &std::path::Path) -> Result<()> {
    let meta = common::RunMetadata::read(metadata)?;
    match meta.command.as_str() {
        "simulate-retrieval" => {
            simulate_cmd::run_retrieval_config(serde_json::from_value(meta.config)?, out_dir)
        }
        "simulate-spectrum" => {
            simulate_cmd::run_spectrum_config(serde_json::from_value(meta.config)?, out_dir)
        }
        "simulate-se" => {
            simulate_cmd::run_se_config(serde_json::from_value(meta.config)?, out_dir)
        }
        "reproduce" => reproduce::run_config(serde_json::from_value(meta.config)?, out_dir),
        other => anyhow::bail!("cannot re-run command kind `{other}`"),
    }
}
