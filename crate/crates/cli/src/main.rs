mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::config::FileConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Compat(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Compat(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Compat(m) => write!(f, "compatibility error: {m}"),
        }
    }
}

impl From<ffrfd::Error> for CliError {
    fn from(e: ffrfd::Error) -> Self {
        if e.is_compatibility() {
            CliError::Compat(e.to_string())
        } else if matches!(e, ffrfd::Error::InvalidArgument(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => {
            let base = path.parent().unwrap_or(std::path::Path::new("."));
            FileConfig::load(path)?.resolve_paths(base)
        }
        None => FileConfig::default(),
    };
    let jobs = cli
        .jobs
        .or(file.jobs)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be positive".into()));
    }
    // training and scoring use the global pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    commands::run(cli.command, &file, jobs)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
