mod args;
mod commands;
mod output;
mod plot;

use std::process::ExitCode;

use clap::Parser;
use depthloss::Error;

use crate::args::Cli;

/// Failure of a subcommand together with its exit status.
#[derive(Debug)]
pub enum Failure {
    /// A check ran to completion and did not pass.
    Check(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Lib(e) => match e {
                Error::NonFinite { .. } => 1,
                Error::Io { .. } | Error::Format { .. } => 3,
                Error::Shape { .. }
                | Error::Domain(_)
                | Error::Config(_)
                | Error::Range(_)
                | Error::Manifest { .. }
                | Error::Spec(_) => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Check(msg) => write!(f, "check failed: {msg}"),
            Failure::Lib(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
