use clap::{Parser, Subcommand};
use fracfield::{cmd_run, cmd_study_convergence, cmd_study_efficiency, load_config, AppError};
use fracfield_core::sim::Preset;
use std::path::PathBuf;
use std::process::ExitCode;

/// Adaptive finite elements for quasi-static phase-field fracture.
#[derive(Parser)]
#[command(name = "fracfield", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Step-count preset: `desk` runs the benchmark protocol with a
    /// five-fold larger step size, `paper` uses the full protocol.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write VTK snapshots every K steps.
    #[arg(long, global = true, value_name = "K")]
    vtk_every: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark timeline (or the adaptive loop when stages > 0).
    Run { config: PathBuf },
    /// Convergence or efficiency study.
    Study {
        /// `convergence` or `efficiency`.
        kind: String,
        config: PathBuf,
    },
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    let preset = match cli.preset.as_str() {
        "desk" => Preset::Desk,
        "paper" => Preset::Paper,
        other => return Err(AppError::User(format!("unknown preset `{other}`"))),
    };
    let config_path = match &cli.command {
        Command::Run { config } => config,
        Command::Study { config, .. } => config,
    };
    let mut rc = load_config(config_path, preset)?;
    if let Some(out) = &cli.out {
        rc.out_dir = out.clone();
    }
    match &cli.command {
        Command::Run { .. } => cmd_run(&rc, cli.vtk_every),
        Command::Study { kind, .. } => match kind.as_str() {
            "convergence" => cmd_study_convergence(&rc),
            "efficiency" => cmd_study_efficiency(&rc),
            other => Err(AppError::User(format!(
                "unknown study kind `{other}` (expected `convergence` or `efficiency`)"
            ))),
        },
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
