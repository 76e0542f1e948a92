//! `primix` command-line entry point.
//!
//! Every subcommand runs one pipeline stage. On failure a single JSON line
//! `{"error": kind, "stage": name, "message": text}` goes to stderr and the
//! exit code is nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use primix::harness::{ExperimentConfig, Stage};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "primix",
    version,
    about = "Motion-primitive fusion experiments on a simulated bilateral arm"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted teleoperation demonstrations of every task.
    Collect(Common),
    /// Split primitive demonstrations into lower-layer datasets.
    Segment(Common),
    /// Train one lower-layer model per primitive dataset.
    TrainLower(Common),
    /// Train upper layers per evaluation and controller.
    TrainUpper(Common),
    /// Train the leader-to-follower model.
    TrainLtof(Common),
    /// Closed-loop trials of every controller on every evaluation.
    Run(Common),
    /// Aggregate run outputs into CSV and text reports.
    EvalReport(Common),
    /// All stages in order.
    All(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root shared by all stages.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_config(common: &Common) -> primix::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn execute(stages: &[Stage], common: &Common) -> Result<(), (Stage, primix::Error)> {
    let cfg = load_config(common).map_err(|e| (stages[0], e))?;
    for &stage in stages {
        let m = stage.execute(&cfg, &common.out).map_err(|e| (stage, e))?;
        println!(
            "{}",
            json!({
                "stage": m.stage,
                "outputs": m.outputs.len(),
                "config_hash": m.meta.config_hash,
                "seed": m.meta.seed,
                "version": m.meta.version,
                "out": display(&common.out),
            })
        );
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", json!({"error": "usage", "stage": null, "message": first}));
            return ExitCode::from(2);
        }
    };
    let (stages, common): (Vec<Stage>, Common) = match cli.command {
        Command::Collect(c) => (vec![Stage::Collect], c),
        Command::Segment(c) => (vec![Stage::Segment], c),
        Command::TrainLower(c) => (vec![Stage::TrainLower], c),
        Command::TrainUpper(c) => (vec![Stage::TrainUpper], c),
        Command::TrainLtof(c) => (vec![Stage::TrainLtof], c),
        Command::Run(c) => (vec![Stage::Run], c),
        Command::EvalReport(c) => (vec![Stage::EvalReport], c),
        Command::All(c) => (Stage::ALL.to_vec(), c),
    };
    match execute(&stages, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, e)) => {
            eprintln!(
                "{}",
                json!({"error": e.kind(), "stage": stage.name(), "message": e.to_string()})
            );
            ExitCode::FAILURE
        }
    }
}
