mod args;
mod commands;
mod config;
mod provenance;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use massimp::{Error, ErrorCategory};
use serde_json::json;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Usage => EXIT_USAGE,
        ErrorCategory::Data | ErrorCategory::Io => EXIT_DATA,
        ErrorCategory::Numerical => EXIT_NUMERICAL,
    }
}

fn report_error(code: &str, category: &str, message: &str, exit: u8) -> ExitCode {
    let body = json!({ "error": { "code": code, "category": category, "message": message, "exit_code": exit } });
    eprintln!("{body}");
    ExitCode::from(exit)
}

fn fail(e: &Error) -> ExitCode {
    let category = e.category();
    report_error(
        e.code(),
        &format!("{category:?}").to_lowercase(),
        &e.to_string(),
        exit_code(category),
    )
}

fn run(cli: &Cli) -> massimp::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Impute(a) => commands::impute(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Bootstrap(a) => commands::bootstrap(a),
        Command::Simulate(a) => commands::simulate(a),
    }
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return report_error("UsageError", "usage", message.trim(), EXIT_USAGE);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
