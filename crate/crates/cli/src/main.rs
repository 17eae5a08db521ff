mod args;
mod commands;
mod settings;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use voxmeta_core::{Error, ErrorKind};

use args::{Cli, Command};
use settings::Settings;

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err.kind() {
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, _) => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: &Cli) -> voxmeta_core::Result<serde_json::Value> {
    let settings = Settings::resolve(&cli.global)?;
    if let Some(jobs) = settings.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::validation(format!("cannot start {jobs} worker thread(s): {e}")))?;
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &settings),
        Command::Consensus(a) => commands::consensus(a, &settings),
        Command::DeriveAge(a) => commands::derive_age(a, &settings),
        Command::Histogram(a) => commands::histogram(a, &settings),
        Command::Split(a) => commands::split(a, &settings),
        Command::Train(a) => commands::train(a, &settings),
        Command::Evaluate(a) => commands::evaluate(a, &settings),
        Command::Baseline(a) => commands::baseline(a, &settings),
        Command::Report(a) => commands::report(a, &settings),
        Command::GenerateSynthetic(a) => commands::generate_synthetic(a, &settings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.global.verbose, cli.global.quiet);
    match run(&cli) {
        Ok(summary) => {
            let mut stdout = std::io::stdout().lock();
            let _ = serde_json::to_writer_pretty(&mut stdout, &summary);
            let _ = writeln!(stdout);
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
