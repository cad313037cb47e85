//! Command-line front end: `run <config>` with output overrides.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ScenarioConfig;
use crate::error::MpmError;
use crate::output::Output;
use crate::scenarios::run_scenario;

#[derive(Debug, Parser)]
#[command(name = "ghost-mpm", version, about = "Ghost-stabilised material point method runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenario described by a TOML config file.
    Run {
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the VTK snapshot stride (0 disables snapshots).
        #[arg(long)]
        snapshot_stride: Option<usize>,
        /// Write the stabilised faces of every step to `ghost_edges.csv`.
        #[arg(long)]
        dump_ghost_edges: bool,
    },
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ran = 0,
    ConfigError = 1,
    InternalError = 2,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

/// Execute a parsed command line, reporting errors on stderr.
pub fn execute(cli: Cli) -> Status {
    match cli.command {
        Command::Run { config, output_dir, snapshot_stride, dump_ghost_edges } => {
            let cfg = match ScenarioConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Status::ConfigError;
                }
            };
            let dir = output_dir.unwrap_or_else(|| cfg.output.directory.clone());
            let stride = snapshot_stride.unwrap_or(cfg.output.snapshot_stride);
            let result = Output::new(dir, stride, dump_ghost_edges).and_then(|out| {
                let res = run_scenario(&cfg, Some(&out))?;
                Ok((out, res))
            });
            match result {
                Ok((out, res)) => {
                    if let Some(s) = res.summary {
                        match (s.divergence_step, &s.divergence_reason) {
                            (Some(step), reason) => eprintln!(
                                "diverged at step {step}: {}",
                                reason.as_deref().unwrap_or("unknown")
                            ),
                            _ => eprintln!("completed {} steps", s.steps_completed),
                        }
                    }
                    eprintln!("artifacts written to {}", out.dir.display());
                    Status::Ran
                }
                Err(e @ MpmError::Config(_)) | Err(e @ MpmError::Parse { .. }) => {
                    eprintln!("error: {e}");
                    Status::ConfigError
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Status::InternalError
                }
            }
        }
    }
}
