use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use projctl_cli::config::{ObsKind, RunConfig};
use projctl_cli::{exit, run};

/// Constrained controllability solver.
///
/// Exit codes: 0 converged and certified, 1 configuration or input error,
/// 2 certification failed (or iteration cap reached), 3 infeasible.
/// Log verbosity is read from PROJCTL_LOG (e.g. `info`).
#[derive(Parser)]
#[command(name = "projctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured certifications and the solve; write report.json,
    /// trajectory.csv and control.csv.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check unique continuation for the configured system and subspaces.
    CheckUc {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute one observability constant.
    ObsConstant {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: ObsKind,
    },
    /// Model catalogue.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
}

#[derive(Subcommand)]
enum ModelsAction {
    /// List model families.
    List,
}

const MODELS: [(&str, &str); 3] = [
    ("heat1d", "heat equation on (0,1), Dirichlet, control on omega; n_modes, omega, n_quad"),
    ("wave1d", "wave equation on (0,1), energy coordinates, control on omega; n_modes, omega, n_quad"),
    ("ode", "explicit y' = A y + B u; a, b (row-major)"),
];

fn dispatch(cmd: Command) -> projctl_cli::Result<i32> {
    match cmd {
        Command::Solve { config, out } => run::solve(&RunConfig::load(&config)?, &out),
        Command::CheckUc { config } => {
            let (json, code) = run::check_uc(&RunConfig::load(&config)?)?;
            print!("{json}");
            Ok(code)
        }
        Command::ObsConstant { config, kind } => {
            let (json, code) = run::obs_constant(&RunConfig::load(&config)?, kind)?;
            print!("{json}");
            Ok(code)
        }
        Command::Models { action: ModelsAction::List } => {
            for (name, desc) in MODELS {
                println!("{name:8} {desc}");
            }
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROJCTL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { exit::OK as u8 });
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::CONFIG as u8)
        }
    }
}
