//! Config-driven runner for motorlink experiments.

pub mod config;
pub mod output;
pub mod run;

use std::path::Path;

use anyhow::Result;
use motorlink::{DynamicsError, HarnessError};

pub use config::{ConfigError, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
}

/// Exit code for an error raised anywhere in a run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return exit::CONFIG;
    }
    match err.downcast_ref::<HarnessError>() {
        Some(HarnessError::Dynamics(DynamicsError::Divergence { .. })) => exit::DIVERGENCE,
        Some(HarnessError::Dynamics(DynamicsError::RelaxationFailed { .. })) => exit::DIVERGENCE,
        _ => exit::FAILURE,
    }
}

/// Runs the configured experiment and writes its outputs into `out`, or the
/// configured directory when `out` is `None`. Returns the directory written.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<std::path::PathBuf> {
    let report = run::execute(cfg)?;
    let files = output::render(&report, cfg)?;
    let dir = out.map_or_else(|| Path::new(&cfg.output.directory).to_path_buf(), Path::to_path_buf);
    output::write(&dir, &files)?;
    Ok(dir)
}
