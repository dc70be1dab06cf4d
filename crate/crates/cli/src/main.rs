use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use motorlink_cli::config::{self, EXPERIMENTS};
use motorlink_cli::{exit, exit_code};

#[derive(Parser)]
#[command(name = "motorlink", version, about = "Planar motor-link soft robot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.directory`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Set a config key, e.g. `--override discretization.m=5`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// List the available experiment kinds.
    ListExperiments,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, overrides } => config::load(&config, &overrides)
            .map_err(anyhow::Error::from)
            .and_then(|cfg| motorlink_cli::run(&cfg, out.as_deref()))
            .map(|dir| println!("wrote {}", dir.display())),
        Command::Validate { config } => config::load(&config, &[])
            .map(|cfg| println!("ok: {} experiment", cfg.experiment.kind()))
            .map_err(anyhow::Error::from),
        Command::ListExperiments => {
            for (kind, about) in EXPERIMENTS {
                println!("{kind:<20} {about}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            let code = exit_code(&e);
            let what = if code == exit::CONFIG { "invalid config" } else { "error" };
            eprintln!("{what}: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
