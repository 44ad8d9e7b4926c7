mod args;
mod commands;
mod config;
mod manifest;

use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches};
use ngk::{ErrorCategory, NgkError};

use crate::args::Cli;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(NgkError),
}

impl From<NgkError> for CliError {
    fn from(e: NgkError) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.category() {
                ErrorCategory::Usage => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Numerical => 4,
            },
        }
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(m) => {
            eprintln!("ngk: usage error: {m}");
            return ExitCode::from(2);
        }
    };
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    match commands::run(&cli).and_then(|outcome| manifest::write(&cli, sub_name, sub_matches, &outcome)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ngk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
