use std::process::ExitCode;

use clap::Parser;
use ghost_mpm::cli::{execute, Cli};

fn main() -> ExitCode {
    execute(Cli::parse()).into()
}
